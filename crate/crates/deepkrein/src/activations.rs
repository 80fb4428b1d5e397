//! Entire activation functions as Taylor-coefficient streams.
//!
//! Every activation is described by its coefficients `a_i` in
//! `σ(ξ) = Σ_i a_i ξ^i`. The *associated* activation `σ̄(ξ) = Σ_i |a_i| ξ^i`
//! is convex on `ℝ₊` and drives the positive-definite companion kernel.
//!
//! | kind | σ | σ̄ | radius |
//! |------|---|----|--------|
//! | `linear` | ξ | ξ | ∞ |
//! | `erf` | erf ξ | erfi ξ | ∞ |
//! | `tanh` | tanh ξ | tan ξ | π/2 |
//! | `logistic` | 1/(1+e^{-ξ}) | ½(1+tan(ξ/2)) | π |
//! | `exp` | e^ξ | e^ξ | ∞ |
//! | `polynomial` | Σ c_i ξ^i | Σ \|c_i\| ξ^i | ∞ |
//! | `relu_surrogate` | ½ξ(1+erf(ξ/c)) | ½ξ(1+erfi(ξ/c)) | ∞ |

use std::f64::consts::{FRAC_2_SQRT_PI, FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::{Error, Result};

/// Default number of series terms used by [`ActivationSpec::series_eval`].
pub const DEFAULT_MAX_TERMS: usize = 30;
/// Default sharpness of the smooth ReLU surrogate.
pub const DEFAULT_RELU_SHARPNESS: f64 = 0.01;

const GRID_POINTS: usize = 10_001;
const LIPSCHITZ_INFLATION: f64 = 1.01;
/// Highest odd index served from the Bernoulli table; beyond it the
/// leading-order asymptotic form is exact to double precision.
const TANH_TABLE_MAX: usize = 301;

#[derive(Clone, Debug, PartialEq)]
pub enum ActivationKind {
    Linear,
    Erf,
    Tanh,
    Logistic,
    Polynomial(Vec<f64>),
    Exp,
    ReluSurrogate { c: f64 },
    /// Associated form of `Erf`.
    Erfi,
    /// Associated form of `Tanh`.
    Tan,
    /// Associated form of `Logistic`: ½(1 + tan(ξ/2)).
    LogisticAssociated,
    /// Associated form of `ReluSurrogate`.
    ReluSurrogateAssociated { c: f64 },
}

/// An entire activation function plus the number of series terms used when
/// it is evaluated through its Taylor expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSpec {
    kind: ActivationKind,
    max_terms: usize,
}

impl ActivationSpec {
    /// Builds a spec, validating `a_0 ≥ 0`, `a_1 > 0` for polynomials and
    /// `c > 0` for the ReLU surrogate.
    pub fn new(kind: ActivationKind) -> Result<Self> {
        match &kind {
            ActivationKind::Polynomial(c) => {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Invalid("polynomial coefficients must be finite".into()));
                }
                let a0 = c.first().copied().unwrap_or(0.0);
                let a1 = c.get(1).copied().unwrap_or(0.0);
                if a0 < 0.0 || a1 <= 0.0 {
                    return Err(Error::Invalid(format!(
                        "polynomial activation needs a_0 >= 0 and a_1 > 0 (got a_0 = {a0}, a_1 = {a1})"
                    )));
                }
            }
            ActivationKind::ReluSurrogate { c } | ActivationKind::ReluSurrogateAssociated { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::Invalid(format!("relu_surrogate sharpness must be positive, got {c}")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, max_terms: DEFAULT_MAX_TERMS })
    }

    pub fn linear() -> Self {
        Self { kind: ActivationKind::Linear, max_terms: DEFAULT_MAX_TERMS }
    }

    pub fn erf() -> Self {
        Self { kind: ActivationKind::Erf, max_terms: DEFAULT_MAX_TERMS }
    }

    pub fn tanh() -> Self {
        Self { kind: ActivationKind::Tanh, max_terms: DEFAULT_MAX_TERMS }
    }

    pub fn logistic() -> Self {
        Self { kind: ActivationKind::Logistic, max_terms: DEFAULT_MAX_TERMS }
    }

    pub fn exp() -> Self {
        Self { kind: ActivationKind::Exp, max_terms: DEFAULT_MAX_TERMS }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        Self::new(ActivationKind::Polynomial(coefficients))
    }

    pub fn relu_surrogate(c: f64) -> Result<Self> {
        Self::new(ActivationKind::ReluSurrogate { c })
    }

    /// Looks up a kind by its configuration name.
    ///
    /// `coefficients` is required for `polynomial`; `c` is optional for the
    /// ReLU surrogate (default [`DEFAULT_RELU_SHARPNESS`]).
    pub fn from_name(name: &str, coefficients: Option<Vec<f64>>, c: Option<f64>) -> Result<Self> {
        let sharp = c.unwrap_or(DEFAULT_RELU_SHARPNESS);
        let kind = match name {
            "linear" => ActivationKind::Linear,
            "erf" => ActivationKind::Erf,
            "tanh" => ActivationKind::Tanh,
            "logistic" => ActivationKind::Logistic,
            "exp" => ActivationKind::Exp,
            "polynomial" => ActivationKind::Polynomial(
                coefficients.ok_or_else(|| Error::Invalid("polynomial activation needs `coefficients`".into()))?,
            ),
            "relu_surrogate" => ActivationKind::ReluSurrogate { c: sharp },
            "erfi" => ActivationKind::Erfi,
            "tan" => ActivationKind::Tan,
            "logistic_associated" => ActivationKind::LogisticAssociated,
            "relu_surrogate_associated" => ActivationKind::ReluSurrogateAssociated { c: sharp },
            other => return Err(Error::Invalid(format!("unknown activation `{other}`"))),
        };
        Self::new(kind)
    }

    /// Returns a copy that evaluates series with `max_terms` terms.
    pub fn with_max_terms(mut self, max_terms: usize) -> Result<Self> {
        if max_terms == 0 {
            return Err(Error::Invalid("max_terms must be positive".into()));
        }
        self.max_terms = max_terms;
        Ok(self)
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    /// Configuration name of the kind.
    pub fn name(&self) -> &'static str {
        match self.kind {
            ActivationKind::Linear => "linear",
            ActivationKind::Erf => "erf",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Logistic => "logistic",
            ActivationKind::Polynomial(_) => "polynomial",
            ActivationKind::Exp => "exp",
            ActivationKind::ReluSurrogate { .. } => "relu_surrogate",
            ActivationKind::Erfi => "erfi",
            ActivationKind::Tan => "tan",
            ActivationKind::LogisticAssociated => "logistic_associated",
            ActivationKind::ReluSurrogateAssociated { .. } => "relu_surrogate_associated",
        }
    }

    /// Taylor coefficient `a_i`.
    pub fn coefficient(&self, i: usize) -> f64 {
        match &self.kind {
            ActivationKind::Linear => f64::from(u8::from(i == 1)),
            ActivationKind::Erf => erf_coefficient(i),
            ActivationKind::Tanh => tanh_coefficient(i),
            ActivationKind::Logistic => logistic_coefficient(i),
            ActivationKind::Polynomial(c) => c.get(i).copied().unwrap_or(0.0),
            ActivationKind::Exp => inv_factorial(i),
            ActivationKind::ReluSurrogate { c } => relu_coefficient(i, *c),
            ActivationKind::Erfi => erf_coefficient(i).abs(),
            ActivationKind::Tan => tanh_coefficient(i).abs(),
            ActivationKind::LogisticAssociated => logistic_coefficient(i).abs(),
            ActivationKind::ReluSurrogateAssociated { c } => relu_coefficient(i, *c).abs(),
        }
    }

    /// The associated activation σ̄ with coefficients `|a_i|`.
    pub fn associated(&self) -> Self {
        let kind = match &self.kind {
            ActivationKind::Erf => ActivationKind::Erfi,
            ActivationKind::Tanh => ActivationKind::Tan,
            ActivationKind::Logistic => ActivationKind::LogisticAssociated,
            ActivationKind::ReluSurrogate { c } => ActivationKind::ReluSurrogateAssociated { c: *c },
            ActivationKind::Polynomial(c) => ActivationKind::Polynomial(c.iter().map(|v| v.abs()).collect()),
            other => other.clone(),
        };
        Self { kind, max_terms: self.max_terms }
    }

    /// True when every coefficient is non-negative, i.e. σ̄ = σ.
    pub fn is_self_associated(&self) -> bool {
        match &self.kind {
            ActivationKind::Polynomial(c) => c.iter().all(|v| *v >= 0.0),
            ActivationKind::Linear
            | ActivationKind::Exp
            | ActivationKind::Erfi
            | ActivationKind::Tan
            | ActivationKind::LogisticAssociated
            | ActivationKind::ReluSurrogateAssociated { .. } => true,
            _ => false,
        }
    }

    /// Radius of convergence of the Taylor series.
    pub fn convergence_radius(&self) -> f64 {
        match self.kind {
            ActivationKind::Tanh | ActivationKind::Tan => FRAC_PI_2,
            // Poles of tanh(ξ/2) and tan(ξ/2) sit at distance π.
            ActivationKind::Logistic | ActivationKind::LogisticAssociated => PI,
            _ => f64::INFINITY,
        }
    }

    /// Kinds that only exist as their series, so arguments beyond the radius
    /// are rejected rather than continued analytically.
    fn series_only(&self) -> bool {
        matches!(self.kind, ActivationKind::Tan | ActivationKind::LogisticAssociated)
    }

    fn check_domain(&self, xi: f64) -> Result<()> {
        if xi.is_nan() {
            return Err(Error::NonFinite(format!("{}(NaN)", self.name())));
        }
        let r = self.convergence_radius();
        if self.series_only() && xi.abs() >= r {
            return Err(Error::Domain { layer: 0, arg: xi, radius: r });
        }
        Ok(())
    }

    fn finite(&self, xi: f64, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("{}({xi}) = {v}", self.name())))
        }
    }

    /// Evaluates σ(ξ) in closed form.
    pub fn eval(&self, xi: f64) -> Result<f64> {
        self.check_domain(xi)?;
        let v = match &self.kind {
            ActivationKind::Linear => xi,
            ActivationKind::Erf => libm::erf(xi),
            ActivationKind::Tanh => xi.tanh(),
            ActivationKind::Logistic => logistic(xi),
            ActivationKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * xi + a),
            ActivationKind::Exp => xi.exp(),
            ActivationKind::ReluSurrogate { c } => 0.5 * xi * (1.0 + libm::erf(xi / c)),
            ActivationKind::Erfi => erfi(xi),
            ActivationKind::Tan => xi.tan(),
            ActivationKind::LogisticAssociated => 0.5 * (1.0 + (0.5 * xi).tan()),
            ActivationKind::ReluSurrogateAssociated { c } => 0.5 * xi * (1.0 + erfi(xi / c)),
        };
        self.finite(xi, v)
    }

    /// Evaluates σ′(ξ) in closed form.
    pub fn derivative(&self, xi: f64) -> Result<f64> {
        self.check_domain(xi)?;
        let v = match &self.kind {
            ActivationKind::Linear => 1.0,
            ActivationKind::Erf => FRAC_2_SQRT_PI * (-xi * xi).exp(),
            ActivationKind::Tanh => {
                let t = xi.tanh();
                1.0 - t * t
            }
            ActivationKind::Logistic => {
                let s = logistic(xi);
                s * (1.0 - s)
            }
            ActivationKind::Polynomial(c) => {
                c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, a)| acc * xi + i as f64 * a)
            }
            ActivationKind::Exp => xi.exp(),
            ActivationKind::ReluSurrogate { c } => {
                let u = xi / c;
                0.5 * (1.0 + libm::erf(u)) + u * (-u * u).exp() * FRAC_2_SQRT_PI * 0.5
            }
            ActivationKind::Erfi => FRAC_2_SQRT_PI * (xi * xi).exp(),
            ActivationKind::Tan => {
                let c = xi.cos();
                1.0 / (c * c)
            }
            ActivationKind::LogisticAssociated => {
                let c = (0.5 * xi).cos();
                0.25 / (c * c)
            }
            ActivationKind::ReluSurrogateAssociated { c } => {
                let u = xi / c;
                0.5 * (1.0 + erfi(u)) + u * (u * u).exp() * FRAC_2_SQRT_PI * 0.5
            }
        };
        self.finite(xi, v)
    }

    /// Truncated series `Σ_{i ≤ max_terms} a_i ξ^i`.
    pub fn series_eval(&self, xi: f64) -> Result<f64> {
        self.check_domain(xi)?;
        let v = (0..=self.max_terms).rev().fold(0.0, |acc, i| acc * xi + self.coefficient(i));
        self.finite(xi, v)
    }

    /// The exact global Lipschitz constant, when the function has one.
    pub fn global_lipschitz(&self) -> Option<f64> {
        match &self.kind {
            ActivationKind::Linear => Some(1.0),
            ActivationKind::Erf => Some(FRAC_2_SQRT_PI),
            ActivationKind::Tanh => Some(1.0),
            ActivationKind::Logistic => Some(0.25),
            ActivationKind::Polynomial(c) => {
                let degree = c.iter().rposition(|v| *v != 0.0).unwrap_or(0);
                (degree <= 1).then(|| c.get(1).copied().unwrap_or(0.0).abs())
            }
            ActivationKind::ReluSurrogate { c } => {
                // σ′ depends on ξ/c only, peaks near ξ ≈ c and tends to 1.
                let m = 8.0 * c;
                let s = grid_sup(m, |xi| self.derivative(xi)).ok()?;
                Some(s * LIPSCHITZ_INFLATION)
            }
            _ => None,
        }
    }

    /// Upper bound on the Lipschitz constant of σ on `[0, m]`.
    ///
    /// Finite `m`: supremum of |σ′| over a uniform grid of 10 001 points,
    /// inflated by 1 %. Infinite `m`: the exact global constant, or an error
    /// for functions that are not globally Lipschitz.
    pub fn lipschitz_on(&self, m: f64) -> Result<f64> {
        if m.is_nan() || m <= 0.0 {
            return Err(Error::Invalid(format!("Lipschitz interval [0, {m}] is empty")));
        }
        if m.is_infinite() {
            return self.global_lipschitz().ok_or_else(|| {
                Error::Precondition(format!("{} is not globally Lipschitz; give a finite interval", self.name()))
            });
        }
        if self.series_only() && m >= self.convergence_radius() {
            return Err(Error::Domain { layer: 0, arg: m, radius: self.convergence_radius() });
        }
        Ok(grid_sup(m, |xi| self.derivative(xi))? * LIPSCHITZ_INFLATION)
    }

    /// σ(−ξ) = −σ(ξ).
    pub fn is_odd(&self) -> bool {
        match &self.kind {
            ActivationKind::Linear
            | ActivationKind::Erf
            | ActivationKind::Tanh
            | ActivationKind::Erfi
            | ActivationKind::Tan => true,
            ActivationKind::Polynomial(c) => c.iter().step_by(2).all(|v| *v == 0.0),
            _ => false,
        }
    }

    /// Concave on `ℝ₊` (σ′ non-increasing there).
    pub fn is_concave_on_nonneg(&self) -> bool {
        match &self.kind {
            ActivationKind::Linear | ActivationKind::Erf | ActivationKind::Tanh => true,
            ActivationKind::Polynomial(c) => c.iter().skip(2).all(|v| *v == 0.0),
            _ => false,
        }
    }

    /// σ(ξ) ≤ 1 for all ξ ≥ 0.
    pub fn is_bounded_by_one(&self) -> bool {
        matches!(self.kind, ActivationKind::Erf | ActivationKind::Tanh | ActivationKind::Logistic)
    }
}

fn grid_sup(m: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let step = m / (GRID_POINTS - 1) as f64;
    let mut best = 0.0f64;
    for k in 0..GRID_POINTS {
        best = best.max(f(k as f64 * step)?.abs());
    }
    Ok(best)
}

fn logistic(xi: f64) -> f64 {
    if xi >= 0.0 {
        1.0 / (1.0 + (-xi).exp())
    } else {
        let e = xi.exp();
        e / (1.0 + e)
    }
}

/// Imaginary error function, summed from its all-positive series.
pub fn erfi(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x.abs() > 27.0 {
        return x.signum() * f64::INFINITY;
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= x2 / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() && n > x2 {
            break;
        }
    }
    FRAC_2_SQRT_PI * sum
}

fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

fn inv_factorial(n: usize) -> f64 {
    if n <= 20 {
        1.0 / (1..=n).map(|k| k as f64).product::<f64>()
    } else {
        (-ln_factorial(n)).exp()
    }
}

fn erf_coefficient(i: usize) -> f64 {
    if i % 2 == 0 {
        return 0.0;
    }
    let n = (i - 1) / 2;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign * FRAC_2_SQRT_PI * inv_factorial(n) / i as f64
}

/// `B_n / n!` for n ≤ `TANH_TABLE_MAX + 1`, from Σ_{k=0}^{n} B_k / (k! (n+1-k)!) = 0.
fn scaled_bernoulli() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let len = TANH_TABLE_MAX + 2;
        let inv_fact: Vec<f64> = (0..=len + 1).map(inv_factorial).collect();
        let mut b = vec![0.0; len + 1];
        b[0] = 1.0;
        for n in 1..=len {
            let s: f64 = (0..n).map(|k| b[k] * inv_fact[n + 1 - k]).sum();
            b[n] = -s;
        }
        b
    })
}

/// tanh ξ = Σ_{n≥1} 4ⁿ(4ⁿ−1) B_{2n}/(2n)! ξ^{2n−1}.
fn tanh_coefficient(i: usize) -> f64 {
    if i % 2 == 0 {
        return 0.0;
    }
    let n = (i + 1) / 2;
    if i <= TANH_TABLE_MAX {
        let four_n = 4f64.powi(n as i32);
        four_n * (four_n - 1.0) * scaled_bernoulli()[2 * n]
    } else {
        // B_{2n}/(2n)! = (−1)^{n+1} 2 ζ(2n)/(2π)^{2n} with ζ(2n) = 1 to double precision.
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        sign * 2.0 * (n as f64 * (4.0 / (PI * PI)).ln()).exp()
    }
}

/// 1/(1+e^{−ξ}) = ½ + ½ tanh(ξ/2).
fn logistic_coefficient(i: usize) -> f64 {
    match i {
        0 => 0.5,
        _ if i % 2 == 0 => 0.0,
        _ => 0.5 * tanh_coefficient(i) * 0.5f64.powi(i as i32),
    }
}

/// ½ξ(1 + erf(ξ/c)) = ½ξ + ½ Σ_k e_k ξ^{k+1} / c^k.
fn relu_coefficient(i: usize, c: f64) -> f64 {
    match i {
        0 => 0.0,
        1 => 0.5,
        _ if i % 2 == 1 => 0.0,
        _ => {
            let k = i - 1;
            let e = erf_coefficient(k);
            let ln = (0.5 * e.abs()).ln() - k as f64 * c.ln();
            e.signum() * ln.exp()
        }
    }
}
