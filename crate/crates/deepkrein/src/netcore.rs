//! The reference network `f(x) = σ_{d−1}(W_{d−1} σ_{d−2}(… σ_0(W_0 x)))`,
//! its weight-decay objective and plain gradient-descent training.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use crate::activations::ActivationSpec;
use crate::{seed, Error, Result};

/// Layer widths `H_0 … H_{d−1}` (with `H_{d−1} = 1`), input dimension `D`
/// and one activation per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    input_dim: usize,
    widths: Vec<usize>,
    activations: Vec<ActivationSpec>,
}

impl Architecture {
    pub fn new(input_dim: usize, widths: Vec<usize>, activations: Vec<ActivationSpec>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Invalid("input dimension must be positive".into()));
        }
        if widths.is_empty() {
            return Err(Error::Invalid("need at least one layer".into()));
        }
        if widths.iter().any(|h| *h == 0) {
            return Err(Error::Invalid("layer widths must be positive".into()));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::Invalid(format!("widths must end in 1 (scalar output), got {widths:?}")));
        }
        if activations.len() != widths.len() {
            return Err(Error::Invalid(format!(
                "{} activations given for {} layers",
                activations.len(),
                widths.len()
            )));
        }
        Ok(Self { input_dim, widths, activations })
    }

    /// Same activation in every layer.
    pub fn uniform(input_dim: usize, widths: Vec<usize>, activation: ActivationSpec) -> Result<Self> {
        let d = widths.len();
        Self::new(input_dim, widths, vec![activation; d])
    }

    /// Depth `d`.
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Input dimension `D`.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// `H_q`.
    pub fn width(&self, q: usize) -> usize {
        self.widths[q]
    }

    /// `H_{q−1}`, with `H_{−1} = D`.
    pub fn fan_in(&self, q: usize) -> usize {
        if q == 0 {
            self.input_dim
        } else {
            self.widths[q - 1]
        }
    }

    pub fn activations(&self) -> &[ActivationSpec] {
        &self.activations
    }

    pub fn activation(&self, q: usize) -> &ActivationSpec {
        &self.activations[q]
    }

    /// The same network with every σ_q replaced by σ̄_q.
    pub fn associated(&self) -> Self {
        Self {
            input_dim: self.input_dim,
            widths: self.widths.clone(),
            activations: self.activations.iter().map(ActivationSpec::associated).collect(),
        }
    }

    /// True when every layer is the identity.
    pub fn is_linear(&self) -> bool {
        self.activations.iter().all(|a| a.name() == "linear")
    }
}

/// One weight matrix `W_q ∈ ℝ^{H_q × H_{q−1}}` per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    mats: Vec<DMatrix<f64>>,
}

impl WeightSet {
    /// Checks shapes against `arch` and that every entry is finite.
    pub fn new(arch: &Architecture, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.len() != arch.depth() {
            return Err(Error::Invalid(format!("{} matrices for depth {}", mats.len(), arch.depth())));
        }
        for (q, m) in mats.iter().enumerate() {
            let want = (arch.width(q), arch.fan_in(q));
            if m.shape() != want {
                return Err(Error::Invalid(format!("W[{q}] has shape {:?}, expected {want:?}", m.shape())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("W[{q}] has a non-finite entry")));
            }
        }
        Ok(Self { mats })
    }

    pub fn zeros(arch: &Architecture) -> Self {
        let mats = (0..arch.depth()).map(|q| DMatrix::zeros(arch.width(q), arch.fan_in(q))).collect();
        Self { mats }
    }

    /// Gaussian initialisation with standard deviation `0.5/√H_{q−1}`.
    pub fn init(arch: &Architecture, master_seed: u64) -> Self {
        let mut rng = seed::rng(master_seed, "netcore/init");
        let mats = (0..arch.depth())
            .map(|q| {
                let std = 0.5 / (arch.fan_in(q) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                DMatrix::from_fn(arch.width(q), arch.fan_in(q), |_, _| normal.sample(&mut rng))
            })
            .collect();
        Self { mats }
    }

    pub fn depth(&self) -> usize {
        self.mats.len()
    }

    pub fn layer(&self, q: usize) -> &DMatrix<f64> {
        &self.mats[q]
    }

    pub fn layer_mut(&mut self, q: usize) -> &mut DMatrix<f64> {
        &mut self.mats[q]
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    /// `‖W_q‖_F²`.
    pub fn frobenius_sq(&self, q: usize) -> f64 {
        self.mats[q].iter().map(|v| v * v).sum()
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { mats: self.mats.iter().map(|m| m * factor).collect() }
    }

    /// `self + step·other`, layer by layer.
    pub fn axpy(&self, step: f64, other: &WeightSet) -> Self {
        Self { mats: self.mats.iter().zip(&other.mats).map(|(a, b)| a + b * step).collect() }
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.mats.iter().map(|m| m.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// Plain-text serialisation: `d`, then per layer its shape and row-major
    /// entries with 17 significant digits (round-trips exactly).
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.mats.len());
        for m in &self.mats {
            out.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`WeightSet::to_text`] output and validates it against `arch`.
    pub fn from_text(arch: &Architecture, text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<&str> {
            tokens.next().ok_or_else(|| Error::Invalid(format!("weight file ended while reading {what}")))
        };
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Invalid(format!("bad integer `{s}`: {e}")));
        let d = parse_usize(next("depth")?)?;
        let mut mats = Vec::with_capacity(d);
        for _ in 0..d {
            let r = parse_usize(next("rows")?)?;
            let c = parse_usize(next("cols")?)?;
            let mut vals = Vec::with_capacity(r * c);
            for _ in 0..r * c {
                let s = next("entry")?;
                vals.push(s.parse::<f64>().map_err(|e| Error::Invalid(format!("bad number `{s}`: {e}")))?);
            }
            mats.push(DMatrix::from_row_slice(r, c, &vals));
        }
        Self::new(arch, mats)
    }
}

/// Formats with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Training pairs `(x_i, y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

impl Dataset {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Invalid("dataset is empty".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::Invalid(format!("{} inputs but {} targets", xs.len(), ys.len())));
        }
        let dim = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
            return Err(Error::Dimension { expected: dim, got: bad.len() });
        }
        if xs.iter().flatten().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("dataset has a non-finite value".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }
}

/// Per-sample loss `ℓ(y, f)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// `(y − f)²`
    Squared,
    /// `log(1 + exp(−y f))`, labels in {−1, +1}.
    Logistic,
}

impl Loss {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "squared" => Ok(Loss::Squared),
            "logistic" => Ok(Loss::Logistic),
            other => Err(Error::Invalid(format!("unknown loss `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::Logistic => "logistic",
        }
    }

    pub fn value(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::Squared => (y - f) * (y - f),
            Loss::Logistic => softplus(-y * f),
        }
    }

    /// `∂ℓ/∂f`.
    pub fn derivative(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::Squared => 2.0 * (f - y),
            Loss::Logistic => -y * sigmoid_neg(y * f),
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1/(1 + e^{z})`.
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Regularisation settings: `λ · scale · Σ_q ‖W_q‖_F²`, with `scale = 1/d` by
/// default so that the penalty equals `λ · R_NN`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalty {
    pub lambda: f64,
    pub scale: f64,
}

impl Penalty {
    pub fn new(lambda: f64, depth: usize) -> Self {
        Self { lambda, scale: 1.0 / depth as f64 }
    }

    pub fn with_scale(lambda: f64, scale: f64) -> Self {
        Self { lambda, scale }
    }
}

fn check_input(arch: &Architecture, x: &[f64]) -> Result<()> {
    if x.len() != arch.input_dim() {
        return Err(Error::Dimension { expected: arch.input_dim(), got: x.len() });
    }
    Ok(())
}

fn check_weights(arch: &Architecture, w: &WeightSet) -> Result<()> {
    if w.depth() != arch.depth() {
        return Err(Error::Invalid(format!("weights have depth {}, architecture {}", w.depth(), arch.depth())));
    }
    for q in 0..arch.depth() {
        let want = (arch.width(q), arch.fan_in(q));
        if w.layer(q).shape() != want {
            return Err(Error::Invalid(format!("W[{q}] has shape {:?}, expected {want:?}", w.layer(q).shape())));
        }
    }
    Ok(())
}

/// Pre-activations `z_q` and outputs `h_q = σ_q(z_q)` of every layer.
struct Trace {
    z: Vec<DVector<f64>>,
    h: Vec<DVector<f64>>,
}

fn trace(arch: &Architecture, w: &WeightSet, x: &[f64]) -> Result<Trace> {
    let mut h_prev = DVector::from_column_slice(x);
    let mut z = Vec::with_capacity(arch.depth());
    let mut h = Vec::with_capacity(arch.depth());
    for q in 0..arch.depth() {
        let zq = w.layer(q) * &h_prev;
        let sigma = arch.activation(q);
        let mut hq = DVector::zeros(zq.len());
        for (i, v) in zq.iter().enumerate() {
            hq[i] = sigma.eval(*v).map_err(|e| e.at_layer(q))?;
        }
        z.push(zq);
        h.push(hq.clone());
        h_prev = hq;
    }
    Ok(Trace { z, h })
}

/// Network output for one input.
pub fn forward(arch: &Architecture, w: &WeightSet, x: &[f64]) -> Result<f64> {
    check_input(arch, x)?;
    check_weights(arch, w)?;
    let t = trace(arch, w, x)?;
    Ok(t.h.last().expect("depth ≥ 1")[0])
}

/// Largest |pre-activation| per layer over the given inputs.
pub fn max_preactivations(arch: &Architecture, w: &WeightSet, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_weights(arch, w)?;
    let mut out = vec![0.0f64; arch.depth()];
    for x in xs {
        check_input(arch, x)?;
        let t = trace(arch, w, x)?;
        for (q, z) in t.z.iter().enumerate() {
            out[q] = out[q].max(z.amax());
        }
    }
    Ok(out)
}

/// `(1/N) Σ_i ℓ(y_i, f(x_i)) + λ·scale·Σ_q ‖W_q‖_F²`.
pub fn objective(arch: &Architecture, w: &WeightSet, data: &Dataset, loss: Loss, penalty: Penalty) -> Result<f64> {
    let mut risk = 0.0;
    for (x, y) in data.xs.iter().zip(&data.ys) {
        risk += loss.value(*y, forward(arch, w, x)?);
    }
    Ok(risk / data.len() as f64 + penalty.lambda * penalty.scale * regularizer_sum(w))
}

fn regularizer_sum(w: &WeightSet) -> f64 {
    (0..w.depth()).map(|q| w.frobenius_sq(q)).sum()
}

/// Exact gradient of [`objective`] by backpropagation.
pub fn gradient(arch: &Architecture, w: &WeightSet, data: &Dataset, loss: Loss, penalty: Penalty) -> Result<WeightSet> {
    check_weights(arch, w)?;
    let d = arch.depth();
    let mut grads: Vec<DMatrix<f64>> = (0..d).map(|q| DMatrix::zeros(arch.width(q), arch.fan_in(q))).collect();
    let n = data.len() as f64;
    for (x, y) in data.xs.iter().zip(&data.ys) {
        check_input(arch, x)?;
        let t = trace(arch, w, x)?;
        let f = t.h[d - 1][0];
        // δ_q = ∂ℓ/∂z_q
        let mut delta = DVector::from_element(1, loss.derivative(*y, f));
        for q in (0..d).rev() {
            let sigma = arch.activation(q);
            for i in 0..delta.len() {
                delta[i] *= sigma.derivative(t.z[q][i]).map_err(|e| e.at_layer(q))?;
            }
            let input = if q == 0 { DVector::from_column_slice(x) } else { t.h[q - 1].clone() };
            grads[q] += &delta * input.transpose() / n;
            if q > 0 {
                delta = w.layer(q).transpose() * &delta;
            }
        }
    }
    for (q, g) in grads.iter_mut().enumerate() {
        *g += w.layer(q) * (2.0 * penalty.lambda * penalty.scale);
    }
    Ok(WeightSet { mats: grads })
}

/// Gradient-descent settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub step_size: f64,
}

/// Trained weights and the objective recorded before every step and after
/// the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub weights: WeightSet,
    pub history: Vec<f64>,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Plain fixed-step gradient descent from [`WeightSet::init`].
///
/// Returns the iterate with the lowest recorded objective, so the result is
/// never worse than the initialisation.
pub fn train(
    arch: &Architecture,
    data: &Dataset,
    loss: Loss,
    penalty: Penalty,
    master_seed: u64,
    config: TrainConfig,
) -> Result<TrainResult> {
    train_from(arch, WeightSet::init(arch, master_seed), data, loss, penalty, config)
}

/// [`train`] from explicit starting weights.
pub fn train_from(
    arch: &Architecture,
    start: WeightSet,
    data: &Dataset,
    loss: Loss,
    penalty: Penalty,
    config: TrainConfig,
) -> Result<TrainResult> {
    if config.steps == 0 {
        return Err(Error::Invalid("steps must be at least 1".into()));
    }
    if !(config.step_size.is_finite() && config.step_size > 0.0) {
        return Err(Error::Invalid(format!("step size must be positive, got {}", config.step_size)));
    }
    if data.dim() != arch.input_dim() {
        return Err(Error::Dimension { expected: arch.input_dim(), got: data.dim() });
    }
    let mut w = start;
    let mut value = objective(arch, &w, data, loss, penalty)?;
    let initial = value;
    let mut history = vec![value];
    let mut best = (value, w.clone());
    for step in 0..config.steps {
        let g = gradient(arch, &w, data, loss, penalty)?;
        w = w.axpy(-config.step_size, &g);
        value = match objective(arch, &w, data, loss, penalty) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Err(Error::Divergence { step: step + 1, value: v }),
            Err(e) if e.is_numerical() => return Err(Error::Divergence { step: step + 1, value: f64::NAN }),
            Err(e) => return Err(e),
        };
        history.push(value);
        if value <= best.0 {
            best = (value, w.clone());
        }
    }
    Ok(TrainResult { weights: best.1, history, initial_objective: initial, final_objective: best.0 })
}

/// Geometric means `(H, L, L̄)` of widths and per-layer Lipschitz constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricMeans {
    pub h: f64,
    pub l: f64,
    pub lbar: f64,
}

/// Per-layer Lipschitz constants `(L_q, L̄_q)`.
///
/// `intervals[q]` is the upper end `m_q` of `[0, m_q]` (∞ for global). A
/// globally Lipschitz σ_q (or σ̄_q) always uses its exact global constant,
/// which is valid on every interval; a function without one gets `∞` on an
/// infinite interval.
pub fn lipschitz_constants(arch: &Architecture, intervals: &[f64]) -> Result<Vec<(f64, f64)>> {
    if intervals.len() != arch.depth() {
        return Err(Error::Invalid(format!("{} intervals for depth {}", intervals.len(), arch.depth())));
    }
    arch.activations()
        .iter()
        .zip(intervals)
        .enumerate()
        .map(|(q, (s, m))| {
            let pick = |a: &ActivationSpec| match a.global_lipschitz() {
                Some(l) => Ok(l),
                None if m.is_infinite() => Ok(f64::INFINITY),
                None => a.lipschitz_on(*m).map_err(|e| e.at_layer(q)),
            };
            Ok((pick(s)?, pick(&s.associated())?))
        })
        .collect()
}

pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let n = values.len() as f64;
    let product: f64 = values.iter().product();
    if product.is_finite() && product > f64::MIN_POSITIVE {
        // Exact for perfect powers such as GM(4, 1) = 2.
        product.powf(1.0 / n)
    } else {
        (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    }
}

/// `H = GM(H_0 … H_{d−1})`, `L = GM(L_q)`, `L̄ = GM(L̄_q)`.
pub fn geometric_means(arch: &Architecture, intervals: &[f64]) -> Result<GeometricMeans> {
    let consts = lipschitz_constants(arch, intervals)?;
    let widths: Vec<f64> = arch.widths().iter().map(|h| *h as f64).collect();
    let ls: Vec<f64> = consts.iter().map(|c| c.0).collect();
    let lbars: Vec<f64> = consts.iter().map(|c| c.1).collect();
    Ok(GeometricMeans { h: geometric_mean(&widths), l: geometric_mean(&ls), lbar: geometric_mean(&lbars) })
}
