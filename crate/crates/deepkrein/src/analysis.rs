//! Regularisation functionals, hypothesis-ball radii, Rademacher bounds and
//! sparsity profiles of the flat representation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::activations::ActivationSpec;
use crate::kreinkernel::{associated_kernel, KernelDefinition, Variant};
use crate::netcore::{forward, geometric_mean, geometric_means, Architecture, GeometricMeans, WeightSet};
use crate::pushforward::{FlatSpace, SeriesVector};
use crate::{seed, Error, Result};

/// A functional value together with the largest argument each `σ_k` (or
/// `σ̄_k`) received while computing it. The maxima are the intervals on
/// which Lipschitz constants must hold.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    pub value: f64,
    pub arg_max: Vec<f64>,
}

struct Chain<'a> {
    acts: Vec<ActivationSpec>,
    arg_max: Vec<f64>,
    arch: &'a Architecture,
}

impl<'a> Chain<'a> {
    fn new(arch: &'a Architecture, variant: Variant) -> Self {
        let acts = match variant {
            Variant::Krein => arch.activations().to_vec(),
            Variant::Associated => arch.activations().iter().map(ActivationSpec::associated).collect(),
        };
        Self { acts, arg_max: vec![0.0; arch.depth()], arch }
    }

    fn apply(&mut self, k: usize, arg: f64) -> Result<f64> {
        self.arg_max[k] = self.arg_max[k].max(arg.abs());
        self.acts[k].eval(arg).map_err(|e| e.at_layer(k))
    }

    fn width(&self, k: usize) -> f64 {
        self.arch.width(k) as f64
    }

    fn done(self, value: f64) -> Functional {
        Functional { value, arg_max: self.arg_max }
    }
}

fn check_weights(arch: &Architecture, w: &WeightSet) -> Result<()> {
    if w.depth() != arch.depth()
        || (0..arch.depth()).any(|q| w.layer(q).shape() != (arch.width(q), arch.fan_in(q)))
    {
        return Err(Error::Invalid("weights do not match the architecture".into()));
    }
    Ok(())
}

fn row_norms_sq(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|r| r.norm_squared()).collect()
}

/// `p_q` (or `p̄_q`) with the argument maxima of every activation.
pub fn reg_layer_detail(arch: &Architecture, w: &WeightSet, q: usize, variant: Variant) -> Result<Functional> {
    check_weights(arch, w)?;
    let d = arch.depth();
    if q >= d {
        return Err(Error::Invalid(format!("layer {q} out of range for depth {d}")));
    }
    let mut c = Chain::new(arch, variant);
    // Inner chain m_q = σ_{q−1}(H_{q−2} σ_{q−2}(… H_0 σ_0(D))), with m_0 = 1.
    let mut m = 1.0;
    if q >= 1 {
        m = c.apply(0, arch.input_dim() as f64)?;
        for k in 1..q {
            let arg = c.width(k - 1) * m;
            m = c.apply(k, arg)?;
        }
    }
    let mut t = 0.0;
    for r in row_norms_sq(w.layer(q)) {
        t += c.apply(q, r * m)?;
    }
    if q + 1 == d {
        return Ok(c.done(t));
    }
    for k in q + 1..d - 1 {
        t = c.width(k) * c.apply(k, t)?;
    }
    let v = c.apply(d - 1, t)?;
    Ok(c.done(v))
}

/// `p_q(W_[q])` (Krein variant) or `p̄_q(W_[q])` (associated variant).
pub fn reg_layer(arch: &Architecture, w: &WeightSet, q: usize, variant: Variant) -> Result<f64> {
    reg_layer_detail(arch, w, q, variant).map(|f| f.value)
}

/// `p_NN` (or `p̄_NN`) with the argument maxima of every activation.
pub fn reg_flat_detail(arch: &Architecture, w: &WeightSet, variant: Variant) -> Result<Functional> {
    check_weights(arch, w)?;
    let mut c = Chain::new(arch, variant);
    let mut u: Vec<f64> = Vec::new();
    for r in row_norms_sq(w.layer(0)) {
        u.push(c.apply(0, r)?);
    }
    for q in 1..arch.depth() {
        let wq = w.layer(q);
        let mut next = Vec::with_capacity(wq.nrows());
        for i in 0..wq.nrows() {
            let arg: f64 = (0..wq.ncols()).map(|j| wq[(i, j)] * wq[(i, j)] * u[j]).sum();
            next.push(c.apply(q, arg)?);
        }
        u = next;
    }
    Ok(c.done(u[0]))
}

/// `p_NN` (Krein variant) or `p̄_NN` (associated variant).
pub fn reg_flat(arch: &Architecture, w: &WeightSet, variant: Variant) -> Result<f64> {
    reg_flat_detail(arch, w, variant).map(|f| f.value)
}

/// `R_NN = (1/d) Σ_q ‖W_[q]‖_F²`.
pub fn rnn_radius(w: &WeightSet) -> f64 {
    (0..w.depth()).map(|q| w.frobenius_sq(q)).sum::<f64>() / w.depth() as f64
}

/// `R_SVM = (L·R_NN)^d`.
pub fn svm_radius(r_nn: f64, l: f64, d: usize) -> f64 {
    (l * r_nn).powi(d as i32)
}

/// `√(R_SVM · ∫K̄(x,x)dν / N)`.
pub fn rademacher_bound_svm(r_svm: f64, kbar_integral: f64, n: usize) -> f64 {
    (r_svm * kbar_integral / n as f64).sqrt()
}

/// Geometric means for Lipschitz intervals `[0, m_q]`; zero-length intervals
/// are widened to the smallest positive float.
pub fn means_on(arch: &Architecture, intervals: &[f64]) -> Result<GeometricMeans> {
    let iv: Vec<f64> = intervals.iter().map(|m| if *m > 0.0 { *m } else { f64::MIN_POSITIVE }).collect();
    geometric_means(arch, &iv)
}

/// `χ_NN(ξ) = σ_{d−1}(d√H_{d−2} σ_{d−2}(… d√H_0 σ_0(ξ)))`.
pub fn chi_nn(arch: &Architecture, xi: f64) -> Result<f64> {
    let d = arch.depth() as f64;
    let mut v = arch.activation(0).eval(xi).map_err(|e| e.at_layer(0))?;
    for k in 1..arch.depth() {
        let arg = d * (arch.width(k - 1) as f64).sqrt() * v;
        v = arch.activation(k).eval(arg).map_err(|e| e.at_layer(k))?;
    }
    Ok(v)
}

/// Checks that every activation is odd and concave on `ℝ₊` (so `σ(0) = 0`).
pub fn check_concave(arch: &Architecture) -> Result<()> {
    for (q, s) in arch.activations().iter().enumerate() {
        if !(s.is_odd() && s.is_concave_on_nonneg()) {
            return Err(Error::Precondition(format!(
                "layer {q} activation `{}` is not odd and concave on the non-negative axis",
                s.name()
            )));
        }
    }
    Ok(())
}

/// The three variants of the concave-case bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcaveBounds {
    /// `max{1, R^d}/√N · √(mean χ_NN(‖x‖)²)`.
    pub integral: f64,
    /// `max{1, R^d}/√N · (d√H L)^d · √(mean ‖x‖²)`, when no σ_q is bounded.
    pub unbounded: Option<f64>,
    /// `max{1, R^d}/√N · (d√H_[q+] L_[q+])^{d−q−1}`, minimised over the
    /// layers `q` whose activation is bounded by one; `(q, value)`.
    pub bounded: Option<(usize, f64)>,
}

impl ConcaveBounds {
    /// The smallest of the available variants.
    pub fn best(&self) -> f64 {
        let mut b = self.integral;
        if let Some(u) = self.unbounded {
            b = b.min(u);
        }
        if let Some((_, v)) = self.bounded {
            b = b.min(v);
        }
        b
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Concave-case bounds on the Rademacher complexity of the network ball.
pub fn tight_bound(arch: &Architecture, r_nn: f64, sample: &[Vec<f64>], n: usize) -> Result<ConcaveBounds> {
    check_concave(arch)?;
    check_sample(arch, sample, n)?;
    let d = arch.depth();
    let lead = 1f64.max(r_nn.powi(d as i32)) / (n as f64).sqrt();
    let mut chi2 = Vec::with_capacity(sample.len());
    for x in sample {
        chi2.push(chi_nn(arch, sq_norm(x).sqrt())?.powi(2));
    }
    let integral = lead * mean(chi2.into_iter()).sqrt();
    let consts = crate::netcore::lipschitz_constants(arch, &vec![f64::INFINITY; d])?;
    let ls: Vec<f64> = consts.iter().map(|c| c.0).collect();
    let hs: Vec<f64> = arch.widths().iter().map(|h| *h as f64).collect();
    let df = d as f64;
    let bounded_layers: Vec<usize> = (0..d).filter(|q| arch.activation(*q).is_bounded_by_one()).collect();
    let unbounded = bounded_layers.is_empty().then(|| {
        let base = df * geometric_mean(&hs).sqrt() * geometric_mean(&ls);
        lead * base.powi(d as i32) * mean(sample.iter().map(|x| sq_norm(x))).sqrt()
    });
    let bounded = bounded_layers
        .iter()
        .map(|&q| {
            let base = df * geometric_mean(&hs[q + 1..]).sqrt() * geometric_mean(&ls[q + 1..]);
            (q, lead * base.powi((d - q - 1) as i32))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1));
    Ok(ConcaveBounds { integral, unbounded, bounded })
}

fn check_sample(arch: &Architecture, sample: &[Vec<f64>], n: usize) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::Invalid("sample is empty".into()));
    }
    if n == 0 {
        return Err(Error::Invalid("N must be positive".into()));
    }
    if let Some(x) = sample.iter().find(|x| x.len() != arch.input_dim()) {
        return Err(Error::Dimension { expected: arch.input_dim(), got: x.len() });
    }
    Ok(())
}

/// Rademacher bounds for the ball `R_NN` of an architecture, with every
/// formula input echoed.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub r_nn: f64,
    pub r_svm: f64,
    pub depth: usize,
    pub n: usize,
    /// Geometric mean of the widths `H_0 … H_{d−1}`.
    pub h: f64,
    /// Geometric mean of the global Lipschitz constants `L_q`.
    pub l: f64,
    /// Sample mean of `K̄_NN(x, x)`.
    pub mean_kbar: f64,
    /// Sample mean of `‖x‖²`.
    pub mean_sq_norm: f64,
    pub bound_kernel: f64,
    /// Only for all-linear architectures.
    pub bound_linear: Option<f64>,
    /// `Err` carries the reason when the concave-case preconditions fail.
    pub bound_concave: std::result::Result<ConcaveBounds, String>,
    pub empirical_estimate: Option<f64>,
}

impl BoundReport {
    /// Smallest applicable theoretical bound.
    pub fn min_bound(&self) -> f64 {
        let mut b = self.bound_kernel;
        if let Some(v) = self.bound_linear {
            b = b.min(v);
        }
        if let Ok(c) = &self.bound_concave {
            b = b.min(c.best());
        }
        b
    }
}

/// Rademacher bounds of the network ball `R_NN` for sample size `n`, with
/// `∫K̄(x,x)dν` and `E‖X‖²` taken over `sample`.
pub fn rademacher_bound_nn(arch: &Architecture, r_nn: f64, sample: &[Vec<f64>], n: usize) -> Result<BoundReport> {
    check_sample(arch, sample, n)?;
    if !(r_nn >= 0.0) {
        return Err(Error::Invalid(format!("R_NN must be non-negative, got {r_nn}")));
    }
    let d = arch.depth();
    let gm = geometric_means(arch, &vec![f64::INFINITY; d])?;
    let def = KernelDefinition::associated(arch.clone());
    let mut kbar = Vec::with_capacity(sample.len());
    for (i, x) in sample.iter().enumerate() {
        kbar.push(associated_kernel(&def, x, x).map_err(|e| Error::Entry { i, j: i, source: Box::new(e) })?);
    }
    let mean_kbar = mean(kbar.into_iter());
    let mean_sq_norm = mean(sample.iter().map(|x| sq_norm(x)));
    let r_svm = svm_radius(r_nn, gm.l, d);
    let bound_kernel = rademacher_bound_svm(r_svm, mean_kbar, n);
    let bound_linear = arch
        .is_linear()
        .then(|| ((gm.h * gm.l * r_nn).powi(d as i32) * mean_sq_norm / n as f64).sqrt());
    let bound_concave = match tight_bound(arch, r_nn, sample, n) {
        Ok(b) => Ok(b),
        Err(Error::Precondition(msg)) => Err(msg),
        Err(e) => return Err(e),
    };
    Ok(BoundReport {
        r_nn,
        r_svm,
        depth: d,
        n,
        h: gm.h,
        l: gm.l,
        mean_kbar,
        mean_sq_norm,
        bound_kernel,
        bound_linear,
        bound_concave,
        empirical_estimate: None,
    })
}

/// Outcome of [`empirical_rademacher`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalEstimate {
    pub value: f64,
    /// Hypotheses actually used.
    pub draws: usize,
    /// Hypotheses discarded for leaving an activation's domain.
    pub rejected: usize,
}

/// A random hypothesis with every layer scaled to `‖W_q‖_F² = R_NN`, so
/// that `rnn_radius = R_NN` with balanced layers.
fn hypothesis(arch: &Architecture, r_nn: f64, rng: &mut ChaCha8Rng) -> WeightSet {
    let mut w = WeightSet::zeros(arch);
    for q in 0..arch.depth() {
        let m = w.layer_mut(q);
        for v in m.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = m.norm();
        if norm > 0.0 {
            *m *= r_nn.sqrt() / norm;
        }
    }
    w
}

/// Monte-Carlo lower estimate of the Rademacher complexity of the ball
/// `{W : rnn_radius(W) ≤ R_NN}` on `sample`.
///
/// `hypothesis_draws` random weight sets on the sphere `rnn_radius = R_NN`
/// are drawn once; each of `trials` sign vectors `ε` then contributes
/// `max_h |(1/N) Σ_i ε_i f_h(x_i)|`, and the trial mean is returned. Since
/// the supremum is only taken over finitely many hypotheses this
/// under-estimates the true complexity. Hypotheses that leave an
/// activation's domain are redrawn, up to `10 × hypothesis_draws` attempts.
pub fn empirical_rademacher(
    arch: &Architecture,
    r_nn: f64,
    sample: &[Vec<f64>],
    trials: usize,
    hypothesis_draws: usize,
    seed: u64,
) -> Result<EmpiricalEstimate> {
    check_sample(arch, sample, sample.len())?;
    if trials == 0 || hypothesis_draws == 0 {
        return Err(Error::Invalid("trials and hypothesis_draws must be at least 1".into()));
    }
    let n = sample.len();
    let mut rng = seed::rng(seed, "analysis/hypotheses");
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(hypothesis_draws);
    let mut rejected = 0;
    let mut last_err = None;
    while outputs.len() < hypothesis_draws && outputs.len() + rejected < 10 * hypothesis_draws {
        let w = hypothesis(arch, r_nn, &mut rng);
        match sample.iter().map(|x| forward(arch, &w, x)).collect::<Result<Vec<f64>>>() {
            Ok(f) => outputs.push(f),
            Err(e) if e.is_numerical() => {
                rejected += 1;
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    if outputs.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::Invalid("no admissible hypothesis".into())));
    }
    let sups: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = ChaCha8Rng::seed_from_u64(seed::derive_indexed(seed, "analysis/signs", t as u64));
            let eps: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            outputs
                .iter()
                .map(|f| (f.iter().zip(&eps).map(|(a, b)| a * b).sum::<f64>() / n as f64).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(EmpiricalEstimate { value: mean(sups.into_iter()), draws: outputs.len(), rejected })
}

/// `Σ_i |a_i|^{2/d}` over the stored entries.
pub fn two_over_d_norm(values: impl Iterator<Item = f64>, d: usize) -> f64 {
    let p = 2.0 / d as f64;
    values
        .map(|a| {
            let a = a.abs();
            if a == 0.0 {
                0.0
            } else if a < 1e-300 {
                (p * a.ln()).exp()
            } else {
                a.powf(p)
            }
        })
        .sum()
}

/// Constants entering the sparsity bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityInputs {
    pub h: f64,
    pub lbar: f64,
    pub input_dim: usize,
    pub r_nn: f64,
    pub epsilons: Vec<f64>,
}

/// Magnitude profile of the total flat weight `g ⊙ v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityProfile {
    /// `‖g ⊙ v‖_{2/d}`.
    pub norm: f64,
    /// `(H L̄)^d · D R_NN / H²`.
    pub norm_bound: f64,
    /// `‖v‖_∞` over entries with `g ≠ 0`.
    pub v_inf: f64,
    /// `R_NN^d`.
    pub v_inf_bound: f64,
    /// `(ε, #{i : |g_i v_i| > ε}, ⌊(H L̄)^d (D R_NN/H²) ε^{−2/d}⌋)`.
    pub counts: Vec<(f64, usize, f64)>,
}

impl SparsityProfile {
    pub fn norm_ok(&self) -> bool {
        self.norm <= self.norm_bound
    }

    pub fn v_inf_ok(&self) -> bool {
        self.v_inf <= self.v_inf_bound
    }

    pub fn counts_ok(&self) -> bool {
        self.counts.iter().all(|(_, c, cap)| (*c as f64) <= *cap)
    }
}

/// Sparsity profile of `g ⊙ v` for a depth-`d` network.
pub fn sparsity_profile(g: &SeriesVector, v: &SeriesVector, d: usize, inputs: &SparsityInputs) -> Result<SparsityProfile> {
    let gv = g.hadamard(v)?;
    let norm = two_over_d_norm(gv.values().iter().copied(), d);
    let di = d as i32;
    let norm_bound =
        (inputs.h * inputs.lbar).powi(di) * inputs.input_dim as f64 * inputs.r_nn / (inputs.h * inputs.h);
    let v_inf = g
        .values()
        .iter()
        .zip(v.values())
        .filter(|(g, _)| **g != 0.0)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    let counts = inputs
        .epsilons
        .iter()
        .map(|&eps| {
            let count = gv.values().iter().filter(|a| a.abs() > eps).count();
            (eps, count, (norm_bound * eps.powf(-2.0 / d as f64)).floor())
        })
        .collect();
    Ok(SparsityProfile { norm, norm_bound, v_inf, v_inf_bound: inputs.r_nn.powi(di), counts })
}

/// Sparsity norm, sup-norms and count caps for one weight set, with the
/// constants computed from the weights themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub r_nn: f64,
    pub h: f64,
    pub lbar: f64,
    /// Lipschitz intervals used for `L̄`; `∞` where an associated
    /// functional leaves its activation's domain.
    pub intervals: Vec<f64>,
    pub profile: SparsityProfile,
    /// `‖v_[q]‖_∞` over entries with `g ≠ 0`, per layer.
    pub pushed_inf: Vec<f64>,
    /// `d · R_NN`.
    pub pushed_inf_bound: f64,
}

impl SparsityReport {
    pub fn pushed_ok(&self) -> bool {
        self.pushed_inf.iter().all(|v| *v <= self.pushed_inf_bound)
    }
}

/// Computes `R_NN`, `H`, `L̄` (on the intervals reached by every associated
/// functional `p̄_q`, `p̄_NN`), the truncated flat weights and the profile.
pub fn sparsity_report(space: &FlatSpace, w: &WeightSet, epsilons: &[f64]) -> Result<SparsityReport> {
    let arch = space.architecture();
    let d = arch.depth();
    let mut intervals = vec![0.0f64; d];
    let mut merge = |f: Result<Functional>| -> Result<()> {
        match f {
            Ok(f) => {
                for (m, a) in intervals.iter_mut().zip(f.arg_max) {
                    *m = m.max(a);
                }
                Ok(())
            }
            // The functional itself leaves σ̄'s domain: no finite L̄ exists
            // from this layer on.
            Err(Error::Domain { layer, .. }) => {
                intervals[layer..].fill(f64::INFINITY);
                Ok(())
            }
            Err(e) => Err(e),
        }
    };
    merge(reg_flat_detail(arch, w, Variant::Associated))?;
    for q in 0..d {
        merge(reg_layer_detail(arch, w, q, Variant::Associated))?;
    }
    let gm = means_on(arch, &intervals)?;
    let r_nn = rnn_radius(w);
    let g = space.metric();
    let mut pushed_inf = Vec::with_capacity(d);
    let mut v = None::<SeriesVector>;
    for q in 0..d {
        let vq = space.pushed_weights(w, q)?;
        let inf = g
            .values()
            .iter()
            .zip(vq.values())
            .filter(|(g, _)| **g != 0.0)
            .map(|(_, x)| x.abs())
            .fold(0.0, f64::max);
        pushed_inf.push(inf);
        v = Some(match v {
            None => vq,
            Some(acc) => acc.hadamard(&vq)?,
        });
    }
    let v = v.expect("depth ≥ 1");
    let inputs =
        SparsityInputs { h: gm.h, lbar: gm.lbar, input_dim: arch.input_dim(), r_nn, epsilons: epsilons.to_vec() };
    let profile = sparsity_profile(&g, &v, d, &inputs)?;
    Ok(SparsityReport { r_nn, h: gm.h, lbar: gm.lbar, intervals, profile, pushed_inf, pushed_inf_bound: d as f64 * r_nn })
}

/// Right-hand side of the per-layer bound `(H L)^d · D/(H_q H_{q−1}) · ‖W_[q]‖_F²`
/// with `H_{−1} = D`; `l` is `L` or `L̄`.
pub fn reg_layer_bound(arch: &Architecture, w: &WeightSet, q: usize, h: f64, l: f64) -> f64 {
    let d = arch.depth() as i32;
    let dim = arch.input_dim() as f64;
    let hq = arch.width(q) as f64;
    let hprev = if q == 0 { dim } else { arch.width(q - 1) as f64 };
    (h * l).powi(d) * dim / (hq * hprev) * w.frobenius_sq(q)
}

/// `(L^d ∏_q ‖W_[q]‖², ((L/d) Σ_q ‖W_[q]‖²)^d)`.
pub fn reg_flat_bounds(w: &WeightSet, l: f64) -> (f64, f64) {
    let d = w.depth();
    let prod: f64 = (0..d).map(|q| w.frobenius_sq(q)).product();
    let sum: f64 = (0..d).map(|q| w.frobenius_sq(q)).sum();
    (l.powi(d as i32) * prod, (l / d as f64 * sum).powi(d as i32))
}
