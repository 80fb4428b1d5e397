//! Truncated explicit flat representation of a network.
//!
//! A network `f(x) = σ_{d−1}(W_{d−1} … σ_0(W_0 x))` with entire activations
//! can be written as `f(x) = Σ_J g_J v_J φ_J(x)`: a fixed monomial feature map
//! `φ_NN`, a signed metric `g_NN` built from the Taylor coefficients and a
//! flat weight `v_NN = ⊙_q v_[q]` built from the weight matrices.
//!
//! # Index bookkeeping
//!
//! Level 0 has the alphabet `A_0 = {x_0 … x_{D−1}}`. Layer `q` turns its
//! alphabet `A_q` into multi-indices `P_{q+1}` over `A_q`. The next alphabet is
//! `A_{q+1} = [H_q] × P_{q+1}`: one *symbol* per unit (the block tag) and
//! multi-index, which is the Kronecker replication `1_{H_q} ⊗ φ(·)`. A symbol
//! carries the feature value and metric of its multi-index, while the weight
//! of row `h` of `W_q` attaches to the block. The top level `P_d` indexes
//! the flat feature space.
//!
//! Truncation keeps multi-indices whose per-level degree and whose composed
//! degree in `x` are both at most `T`. Symbols whose metric is exactly zero
//! (e.g. even powers of `erf`) contribute nothing and are not materialised.
//! Symbols and multi-indices are ordered by the smallest `T` that admits
//! them, so raising `T` never renumbers existing indices: every vector at
//! truncation `T` is a prefix of the same vector at `T+1`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use crate::activations::ActivationSpec;
use crate::netcore::{fmt17, Architecture, WeightSet};
use crate::{Error, Result};

/// Default truncation degree.
pub const DEFAULT_TRUNCATION: u32 = 8;
/// Default cap on the number of multi-indices per level.
pub const DEFAULT_MAX_INDICES: usize = 2_000_000;

const ROOT: u32 = u32::MAX;

/// Sparse multi-index: `(symbol, exponent)` pairs with positive exponents,
/// sorted by symbol. Ordered graded-lexicographically: by degree, then by the
/// dense exponent tuple in descending lexicographic order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pairs: Vec<(u32, u32)>,
}

impl MultiIndex {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_dense(exponents: &[u32]) -> Self {
        let pairs = exponents.iter().enumerate().filter(|(_, e)| **e > 0).map(|(s, e)| (s as u32, *e)).collect();
        Self { pairs }
    }

    /// Builds from `(symbol, exponent)` pairs in any order; repeated symbols add up.
    pub fn from_pairs(mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(pairs.len());
        for (s, e) in pairs {
            match out.last_mut() {
                Some(last) if last.0 == s => last.1 += e,
                _ => out.push((s, e)),
            }
        }
        out.retain(|p| p.1 > 0);
        Self { pairs: out }
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn degree(&self) -> u32 {
        self.pairs.iter().map(|p| p.1).sum()
    }

    pub fn exponent(&self, symbol: u32) -> u32 {
        self.pairs.binary_search_by_key(&symbol, |p| p.0).map_or(0, |k| self.pairs[k].1)
    }

    pub fn to_dense(&self, n: usize) -> Vec<u32> {
        let mut out = vec![0; n];
        for &(s, e) in &self.pairs {
            out[s as usize] = e;
        }
        out
    }

    /// `∏_j x_j^{i_j}`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.pairs.iter().map(|&(s, e)| x[s as usize].powi(e as i32)).product()
    }

    /// `|i|! / ∏_j i_j!`.
    pub fn multinomial(&self) -> f64 {
        let mut acc = 1.0;
        let mut n = 0u32;
        for &(_, e) in &self.pairs {
            for k in 1..=e {
                n += 1;
                acc *= f64::from(n) / f64::from(k);
            }
        }
        acc
    }

    fn fmt_sparse(&self) -> String {
        let inner: Vec<String> = self.pairs.iter().map(|(s, e)| format!("{s}:{e}")).collect();
        format!("{{{}}}", inner.join(","))
    }

    fn fmt_dense(&self, n: usize) -> String {
        let inner: Vec<String> = self.to_dense(n).iter().map(u32::to_string).collect();
        format!("({})", inner.join(","))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let (a, b) = (&self.pairs, &other.pairs);
            let (mut i, mut j) = (0, 0);
            loop {
                let sa = a.get(i).map(|p| p.0);
                let sb = b.get(j).map(|p| p.0);
                let s = match (sa, sb) {
                    (None, None) => return Ordering::Equal,
                    (Some(x), None) => x,
                    (None, Some(y)) => y,
                    (Some(x), Some(y)) => x.min(y),
                };
                let ea = if sa == Some(s) { a[i].1 } else { 0 };
                let eb = if sb == Some(s) { b[j].1 } else { 0 };
                if ea != eb {
                    // A larger exponent on an earlier symbol comes first.
                    return eb.cmp(&ea);
                }
                if sa == Some(s) {
                    i += 1;
                }
                if sb == Some(s) {
                    j += 1;
                }
            }
        })
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All multi-indices over an alphabet with per-level degree `≤ T` and
/// weighted (composed) degree `≤ T`, stored as a prefix tree: entry `e` is
/// its parent with one more copy of `symbol[e]`, the largest symbol in `e`.
/// Entries are ordered by rank (the smallest `T` admitting them), then
/// graded-lex; for plain monomials this is graded-lex order.
#[derive(Debug)]
pub struct IndexSpace {
    n_symbols: usize,
    trunc: u32,
    parent: Vec<u32>,
    symbol: Vec<u32>,
    exp: Vec<u32>,
    degree: Vec<u32>,
    composed: Vec<u32>,
    rank: Vec<u32>,
    lookup: OnceLock<HashMap<MultiIndex, u32>>,
}

impl IndexSpace {
    /// Plain monomials over `n` variables of total degree `≤ trunc`.
    pub fn monomials(n: usize, trunc: u32) -> Result<Self> {
        Self::build(&vec![1; n], &vec![1; n], trunc, DEFAULT_MAX_INDICES, 0)
    }

    fn build(weight: &[u32], sym_rank: &[u32], trunc: u32, limit: usize, level: usize) -> Result<Self> {
        let n = weight.len();
        let mut sp = Self {
            n_symbols: n,
            trunc,
            parent: vec![ROOT],
            symbol: vec![ROOT],
            exp: vec![0],
            degree: vec![0],
            composed: vec![0],
            rank: vec![0],
            lookup: OnceLock::new(),
        };
        // Symbols grouped by weight, each group in increasing id order.
        let max_w = weight.iter().copied().max().unwrap_or(0);
        let mut groups: Vec<Vec<u32>> = vec![Vec::new(); max_w as usize + 1];
        for (s, w) in weight.iter().enumerate() {
            if *w <= trunc {
                groups[*w as usize].push(s as u32);
            }
        }
        let mut start = 0usize;
        let mut cand: Vec<u32> = Vec::new();
        for k in 1..=trunc {
            let end = sp.parent.len();
            for e in start..end {
                let s0 = if e == 0 { 0 } else { sp.symbol[e] };
                let budget = trunc - sp.composed[e];
                cand.clear();
                for group in groups.iter().take(budget as usize + 1) {
                    let from = group.partition_point(|s| *s < s0);
                    cand.extend_from_slice(&group[from..]);
                }
                cand.sort_unstable();
                for &s in &cand {
                    let su = s as usize;
                    let exp = if e != 0 && sp.symbol[e] == s { sp.exp[e] + 1 } else { 1 };
                    let composed = sp.composed[e] + weight[su];
                    sp.parent.push(e as u32);
                    sp.symbol.push(s);
                    sp.exp.push(exp);
                    sp.degree.push(k);
                    sp.composed.push(composed);
                    sp.rank.push(k.max(composed).max(sp.rank[e]).max(sym_rank[su]));
                }
                if sp.parent.len() > limit {
                    return Err(Error::TooLarge { level, limit });
                }
            }
            if sp.parent.len() == end {
                break;
            }
            start = end;
        }
        sp.order_by_rank();
        Ok(sp)
    }

    /// Stable reorder by rank, so the space at `T` is a prefix of the space
    /// at `T+1`. Parents never outrank their children, so parents still come
    /// first.
    fn order_by_rank(&mut self) {
        let mut order: Vec<u32> = (0..self.len() as u32).collect();
        order.sort_by_key(|e| self.rank[*e as usize]);
        if order.iter().enumerate().all(|(i, e)| i == *e as usize) {
            return;
        }
        let mut new_pos = vec![0u32; order.len()];
        for (i, e) in order.iter().enumerate() {
            new_pos[*e as usize] = i as u32;
        }
        let permute = |v: &[u32]| -> Vec<u32> { order.iter().map(|e| v[*e as usize]).collect() };
        self.parent = order
            .iter()
            .map(|e| {
                let p = self.parent[*e as usize];
                if p == ROOT { ROOT } else { new_pos[p as usize] }
            })
            .collect();
        self.symbol = permute(&self.symbol);
        self.exp = permute(&self.exp);
        self.degree = permute(&self.degree);
        self.composed = permute(&self.composed);
        self.rank = permute(&self.rank);
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Alphabet size `n`.
    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn truncation(&self) -> u32 {
        self.trunc
    }

    pub fn degree(&self, e: usize) -> u32 {
        self.degree[e]
    }

    /// Degree in the network input `x`.
    pub fn composed_degree(&self, e: usize) -> u32 {
        self.composed[e]
    }

    /// Smallest truncation degree at which this index exists.
    pub fn rank(&self, e: usize) -> u32 {
        self.rank[e]
    }

    pub fn multi_index(&self, e: usize) -> MultiIndex {
        let mut pairs = Vec::new();
        let mut cur = e;
        while cur != 0 {
            let s = self.symbol[cur];
            let k = self.exp[cur];
            pairs.push((s, k));
            for _ in 0..k {
                cur = self.parent[cur] as usize;
            }
        }
        pairs.reverse();
        MultiIndex { pairs }
    }

    /// Position of a multi-index, if stored.
    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        let map = self.lookup.get_or_init(|| (0..self.len()).map(|e| (self.multi_index(e), e as u32)).collect());
        map.get(index).map(|e| *e as usize)
    }

    /// Values of a multiplicative stream: `∏_s sym[s]^{J_s}` for every `J`.
    pub fn product_stream(&self, sym: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        out[0] = 1.0;
        for e in 1..self.len() {
            out[e] = out[self.parent[e] as usize] * sym[self.symbol[e] as usize];
        }
        out
    }

    /// `multinomial(J)·∏_s mu[s]^{J_s}` for every `J`.
    fn multinomial_stream(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        out[0] = 1.0;
        for e in 1..self.len() {
            let ratio = f64::from(self.degree[e]) / f64::from(self.exp[e]);
            out[e] = out[self.parent[e] as usize] * ratio * mu[self.symbol[e] as usize];
        }
        out
    }

    /// `γ_J = multinomial(|J|; J)·a_{|J|}` times `∏ mu^J`.
    fn gamma_stream(&self, coefficient: &dyn Fn(usize) -> f64, mu: &[f64]) -> Vec<f64> {
        let a: Vec<f64> = (0..=self.trunc as usize).map(coefficient).collect();
        let mut g = self.multinomial_stream(mu);
        for (e, v) in g.iter_mut().enumerate() {
            *v *= a[self.degree[e] as usize];
        }
        g
    }
}

/// A truncated coefficient vector over an [`IndexSpace`]; absent indices are
/// exactly zero.
#[derive(Clone, Debug)]
pub struct SeriesVector {
    space: Arc<IndexSpace>,
    values: Vec<f64>,
}

impl SeriesVector {
    pub fn new(space: Arc<IndexSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::Dimension { expected: space.len(), got: values.len() });
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn truncation(&self) -> u32 {
        self.space.trunc
    }

    /// Alphabet size.
    pub fn dimension(&self) -> usize {
        self.space.n_symbols
    }

    /// Value at `index`, zero when the index is not stored.
    pub fn get(&self, index: &MultiIndex) -> f64 {
        self.space.position(index).map_or(0.0, |e| self.values[e])
    }

    /// `(multi-index, value)` pairs in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.values.iter().enumerate().map(|(e, v)| (self.space.multi_index(e), *v))
    }

    fn check_same(&self, other: &SeriesVector) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || self.len() == other.len() && self.dimension() == other.dimension()
        {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "series vectors live on different index spaces ({} vs {} entries)",
                self.len(),
                other.len()
            )))
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &SeriesVector) -> Result<SeriesVector> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(SeriesVector { space: self.space.clone(), values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SeriesVector {
        SeriesVector { space: self.space.clone(), values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// Dump with dense exponent tuples: `(e_0,…) block value` per line.
    pub fn dump_dense(&self) -> String {
        let mut out = String::new();
        for (e, v) in self.values.iter().enumerate() {
            let idx = self.space.multi_index(e);
            let _ = writeln!(out, "{} 0 {}", idx.fmt_dense(self.dimension()), fmt17(*v));
        }
        out
    }
}

/// `Σ_i g_i v_i φ_i`.
pub fn flat_eval(v: &SeriesVector, phi: &SeriesVector, g: &SeriesVector) -> Result<f64> {
    v.check_same(phi)?;
    v.check_same(g)?;
    Ok(g.values.iter().zip(&v.values).zip(&phi.values).map(|((g, v), p)| g * v * p).sum())
}

/// `Σ_i g_i ∏_k a_k,i`: the multi-linear indefinite product of several vectors.
pub fn multilinear(vectors: &[&SeriesVector], g: &SeriesVector) -> Result<f64> {
    for v in vectors {
        v.check_same(g)?;
    }
    Ok((0..g.len()).map(|e| g.values[e] * vectors.iter().map(|v| v.values[e]).product::<f64>()).sum())
}

/// `φ(x)`: every monomial of degree `≤ T`.
pub fn monomial_features(x: &[f64], trunc: u32) -> Result<SeriesVector> {
    let space = Arc::new(IndexSpace::monomials(x.len(), trunc)?);
    let values = space.product_stream(x);
    SeriesVector::new(space, values)
}

/// `γ_i = multinomial(|i|; i)·a_{|i|}` for an activation spec.
pub fn gamma_weights(spec: &ActivationSpec, n: usize, trunc: u32) -> Result<SeriesVector> {
    gamma_weights_with(&|i| spec.coefficient(i), n, trunc)
}

/// [`gamma_weights`] for an arbitrary coefficient sequence.
pub fn gamma_weights_with(coefficient: &dyn Fn(usize) -> f64, n: usize, trunc: u32) -> Result<SeriesVector> {
    let space = Arc::new(IndexSpace::monomials(n, trunc)?);
    let values = space.gamma_stream(coefficient, &vec![1.0; n]);
    SeriesVector::new(space, values)
}

/// Both sides of `σ(⟨x_1,…,x_m⟩_μ) = ⟨φ(x_1),…,φ(x_m)⟩_{γ⊙φ(μ)}`, the right
/// side truncated at degree `T`. `⟨x_1,…,x_m⟩_μ = Σ_j μ_j ∏_k x_{k,j}`.
pub fn pushforward_check(spec: &ActivationSpec, xs: &[&[f64]], mu: &[f64], trunc: u32) -> Result<(f64, f64)> {
    let n = mu.len();
    if xs.is_empty() {
        return Err(Error::Invalid("need at least one argument vector".into()));
    }
    if let Some(bad) = xs.iter().find(|x| x.len() != n) {
        return Err(Error::Dimension { expected: n, got: bad.len() });
    }
    let arg: f64 = (0..n).map(|j| mu[j] * xs.iter().map(|x| x[j]).product::<f64>()).sum();
    let r = spec.convergence_radius();
    if arg.abs() >= r {
        return Err(Error::Domain { layer: 0, arg, radius: r });
    }
    let lhs = spec.eval(arg)?;
    let space = IndexSpace::monomials(n, trunc)?;
    let gamma = space.gamma_stream(&|i| spec.coefficient(i), mu);
    let mut rhs = 0.0;
    let phis: Vec<Vec<f64>> = xs.iter().map(|x| space.product_stream(x)).collect();
    for e in 0..space.len() {
        rhs += gamma[e] * phis.iter().map(|p| p[e]).product::<f64>();
    }
    Ok((lhs, rhs))
}

/// One layer of the flat construction: the alphabet `A_q` and the
/// multi-indices `P_{q+1}` built over it.
#[derive(Debug)]
struct Level {
    /// Unit of layer `q−1` (or input coordinate for `q = 0`) of each symbol.
    block: Vec<u32>,
    /// Entry of `P_q` each symbol replicates (coordinate for `q = 0`).
    child: Vec<u32>,
    space: Arc<IndexSpace>,
    /// Metric on `P_{q+1}`.
    metric: Vec<f64>,
}

/// The truncated flat index structure of an architecture: feature space,
/// metric and the bookkeeping needed to push weights through every layer.
#[derive(Debug)]
pub struct FlatSpace {
    arch: Architecture,
    trunc: u32,
    levels: Vec<Level>,
}

impl FlatSpace {
    pub fn build(arch: &Architecture, trunc: u32) -> Result<Self> {
        Self::build_with_limit(arch, trunc, DEFAULT_MAX_INDICES)
    }

    /// Builds the structure, failing with [`Error::TooLarge`] when a level
    /// would exceed `limit` multi-indices.
    pub fn build_with_limit(arch: &Architecture, trunc: u32, limit: usize) -> Result<Self> {
        if trunc == 0 {
            return Err(Error::Invalid("truncation degree must be at least 1".into()));
        }
        let dim = arch.input_dim();
        let mut block: Vec<u32> = (0..dim as u32).collect();
        let mut child: Vec<u32> = (0..dim as u32).collect();
        let mut weight = vec![1u32; dim];
        let mut sym_rank = vec![1u32; dim];
        let mut mu = vec![1.0; dim];
        let mut levels = Vec::with_capacity(arch.depth());
        for q in 0..arch.depth() {
            let space = Arc::new(IndexSpace::build(&weight, &sym_rank, trunc, limit, q)?);
            let sigma = arch.activation(q);
            let metric = space.gamma_stream(&|i| sigma.coefficient(i), &mu);
            if q + 1 < arch.depth() {
                let mut next: Vec<(u32, u32, u32)> = Vec::new();
                for (e, g) in metric.iter().enumerate() {
                    if *g != 0.0 {
                        for h in 0..arch.width(q) as u32 {
                            next.push((space.rank(e), e as u32, h));
                        }
                    }
                }
                next.sort_unstable();
                if next.len() > limit {
                    return Err(Error::TooLarge { level: q + 1, limit });
                }
                let nb = next.iter().map(|t| t.2).collect();
                let nc: Vec<u32> = next.iter().map(|t| t.1).collect();
                weight = nc.iter().map(|e| space.composed_degree(*e as usize)).collect();
                sym_rank = next.iter().map(|t| t.0).collect();
                let new_mu = nc.iter().map(|e| metric[*e as usize]).collect();
                levels.push(Level { block, child, space, metric });
                block = nb;
                child = nc;
                mu = new_mu;
            } else {
                levels.push(Level { block, child, space, metric });
                break;
            }
        }
        Ok(Self { arch: arch.clone(), trunc, levels })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn truncation(&self) -> u32 {
        self.trunc
    }

    /// The flat index space `P_d`.
    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.levels.last().expect("depth ≥ 1").space
    }

    /// Number of flat features.
    pub fn len(&self) -> usize {
        self.space().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Alphabet size per level.
    pub fn alphabet_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.block.len()).collect()
    }

    /// Multi-index count per level.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.space.len()).collect()
    }

    fn wrap(&self, values: Vec<f64>) -> SeriesVector {
        SeriesVector { space: self.space().clone(), values }
    }

    /// Lifts values on `P_{q+1}` to symbol values of `A_{q+1}`.
    fn lift(&self, q: usize, vals: &[f64]) -> Vec<f64> {
        self.levels[q + 1].child.iter().map(|e| vals[*e as usize]).collect()
    }

    /// Runs a stream from symbol values at level `from` to the top.
    fn run_up(&self, from: usize, mut sym: Vec<f64>) -> Vec<f64> {
        for q in from..self.levels.len() {
            let vals = self.levels[q].space.product_stream(&sym);
            if q + 1 == self.levels.len() {
                return vals;
            }
            sym = self.lift(q, &vals);
        }
        unreachable!("levels are non-empty")
    }

    /// `φ_NN(x)`.
    pub fn feature_map(&self, x: &[f64]) -> Result<SeriesVector> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::Dimension { expected: self.arch.input_dim(), got: x.len() });
        }
        Ok(self.wrap(self.run_up(0, x.to_vec())))
    }

    /// `g_NN`.
    pub fn metric(&self) -> SeriesVector {
        self.wrap(self.levels.last().expect("depth ≥ 1").metric.clone())
    }

    /// `|g_NN|`, which is also the metric of the associated network.
    pub fn abs_metric(&self) -> SeriesVector {
        self.metric().map(f64::abs)
    }

    /// `v_[q]`: the weights of layer `q` pushed to the flat space.
    pub fn pushed_weights(&self, w: &WeightSet, q: usize) -> Result<SeriesVector> {
        let d = self.arch.depth();
        if q >= d {
            return Err(Error::Invalid(format!("layer {q} out of range for depth {d}")));
        }
        if w.depth() != d || w.layer(q).shape() != (self.arch.width(q), self.arch.fan_in(q)) {
            return Err(Error::Invalid("weights do not match the architecture".into()));
        }
        let wq = w.layer(q);
        let level = &self.levels[q];
        let row_sym = |h: usize| -> Vec<f64> { level.block.iter().map(|b| wq[(h, *b as usize)]).collect() };
        if q + 1 == d {
            return Ok(self.wrap(level.space.product_stream(&row_sym(0))));
        }
        // Per unit h, the new weight of symbol (h, J) is ∏_s W_q[h, block(s)]^{J_s}.
        let rows: Vec<Vec<f64>> = (0..self.arch.width(q)).map(|h| level.space.product_stream(&row_sym(h))).collect();
        let next = &self.levels[q + 1];
        let sym = next.block.iter().zip(&next.child).map(|(h, e)| rows[*h as usize][*e as usize]).collect();
        Ok(self.wrap(self.run_up(q + 1, sym)))
    }

    /// `v_NN = ⊙_q v_[q]`.
    pub fn flat_weight(&self, w: &WeightSet) -> Result<SeriesVector> {
        let mut v = self.pushed_weights(w, 0)?;
        for q in 1..self.arch.depth() {
            v = v.hadamard(&self.pushed_weights(w, q)?)?;
        }
        Ok(v)
    }

    /// Dump of a flat vector: one line per index with its exponent tuple,
    /// block tag and value. Depth-1 networks use dense tuples over the input
    /// coordinates; deeper networks use sparse `{symbol:exponent,…}` tuples
    /// and list every symbol of every alphabet as `#` comment lines.
    pub fn dump(&self, v: &SeriesVector) -> Result<String> {
        if v.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: v.len() });
        }
        let mut out = String::new();
        let d = self.arch.depth();
        let _ = writeln!(out, "# depth {d} truncation {} entries {}", self.trunc, v.len());
        for q in 1..d {
            let prev = &self.levels[q - 1].space;
            let level = &self.levels[q];
            for (s, (b, c)) in level.block.iter().zip(&level.child).enumerate() {
                let idx = prev.multi_index(*c as usize);
                let shown = if q == 1 { idx.fmt_dense(self.arch.input_dim()) } else { idx.fmt_sparse() };
                let _ = writeln!(out, "# level {q} symbol {s} block {b} index {shown}");
            }
        }
        let top = self.space();
        for (e, val) in v.values.iter().enumerate() {
            let idx = top.multi_index(e);
            let shown = if d == 1 { idx.fmt_dense(self.arch.input_dim()) } else { idx.fmt_sparse() };
            let _ = writeln!(out, "{shown} 0 {}", fmt17(*val));
        }
        Ok(out)
    }
}

/// `φ_NN(x)` for a one-off architecture.
pub fn flatten_feature_map(arch: &Architecture, x: &[f64], trunc: u32) -> Result<SeriesVector> {
    FlatSpace::build(arch, trunc)?.feature_map(x)
}

/// `g_NN` for a one-off architecture.
pub fn flatten_metric(arch: &Architecture, trunc: u32) -> Result<SeriesVector> {
    Ok(FlatSpace::build(arch, trunc)?.metric())
}

/// `v_[q]` for a one-off architecture.
pub fn pushforward_weights(arch: &Architecture, w: &WeightSet, q: usize, trunc: u32) -> Result<SeriesVector> {
    FlatSpace::build(arch, trunc)?.pushed_weights(w, q)
}

/// `v_NN` for a one-off architecture.
pub fn flat_weight(arch: &Architecture, w: &WeightSet, trunc: u32) -> Result<SeriesVector> {
    FlatSpace::build(arch, trunc)?.flat_weight(w)
}
