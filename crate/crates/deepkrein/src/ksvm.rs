//! The equivalent indefinite (Kreĭn) SVM in the `α`-parameterisation.
//!
//! The stabilised objective is
//! `(1/N) Σ_i ℓ(y_i, (Gα)_i) + λ αᵀGα`; its regulariser can be negative when
//! `G` is indefinite, so "training" means finding a stationary point.
//! For squared loss the canonical one solves `(G + λN I) α = y`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::kreinkernel::{cross_gram, gram, KernelDefinition, Variant};
use crate::netcore::{fmt17, Dataset, Loss, TrainConfig};
use crate::{Error, Result};

/// Relative threshold of the near-singular test.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Result of the closed-form squared-loss solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SquaredSolution {
    pub alpha: DVector<f64>,
    /// `‖(G + λN I)α − y‖₂`.
    pub residual: f64,
    /// Eigenvalues of `G`, ascending.
    pub spectrum: Vec<f64>,
}

/// Result of gradient descent on the stabilised objective.
#[derive(Clone, Debug, PartialEq)]
pub struct GdSolution {
    pub alpha: DVector<f64>,
    pub gradient_norm: f64,
    /// Objective before every step and after the last one.
    pub history: Vec<f64>,
}

/// The stabilised objective split into its two terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveParts {
    pub risk: f64,
    /// `λ αᵀGα`, possibly negative.
    pub regularizer: f64,
    pub total: f64,
}

fn check_problem(gram: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<usize> {
    let n = y.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::Dimension { expected: n, got: gram.nrows() });
    }
    if n == 0 {
        return Err(Error::Invalid("empty training set".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    if gram.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gram matrix or labels".into()));
    }
    Ok(n)
}

/// Solves `(G + λN I) α = y` through the symmetric eigendecomposition of
/// `G`, followed by one step of iterative refinement.
pub fn train_squared(gram: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<SquaredSolution> {
    let n = check_problem(gram, y, lambda)?;
    let shift = lambda * n as f64;
    let eig = SymmetricEigen::new(gram.clone());
    let norm = eig.eigenvalues.amax();
    let threshold = SINGULAR_TOLERANCE * norm;
    if let Some(e) = eig.eigenvalues.iter().find(|e| (*e + shift).abs() < threshold || *e + shift == 0.0) {
        return Err(Error::Singular { eigenvalue: *e, shift, threshold });
    }
    let q = &eig.eigenvectors;
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let mut c = q.transpose() * rhs;
        for (ci, e) in c.iter_mut().zip(eig.eigenvalues.iter()) {
            *ci /= e + shift;
        }
        q * c
    };
    let system = |a: &DVector<f64>| -> DVector<f64> { gram * a + a * shift };
    let mut alpha = solve(y);
    let r = y - system(&alpha);
    alpha += solve(&r);
    let residual = (system(&alpha) - y).norm();
    let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    spectrum.sort_by(f64::total_cmp);
    Ok(SquaredSolution { alpha, residual, spectrum })
}

/// `(1/N) Σ_i ℓ(y_i, (Gα)_i) + λ αᵀGα`.
pub fn stabilized_objective(
    alpha: &DVector<f64>,
    gram: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    loss: Loss,
) -> Result<ObjectiveParts> {
    let n = y.len();
    if alpha.len() != n || gram.shape() != (n, n) {
        return Err(Error::Dimension { expected: n, got: alpha.len() });
    }
    let f = gram * alpha;
    let risk = f.iter().zip(y.iter()).map(|(f, y)| loss.value(*y, *f)).sum::<f64>() / n as f64;
    let regularizer = lambda * alpha.dot(&f);
    Ok(ObjectiveParts { risk, regularizer, total: risk + regularizer })
}

/// `∂/∂α` of [`stabilized_objective`]: `(1/N) G ℓ′(y, Gα) + 2λ Gα`
/// (`G` symmetric).
pub fn gradient_alpha(
    alpha: &DVector<f64>,
    gram: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    loss: Loss,
) -> Result<DVector<f64>> {
    let n = y.len();
    if alpha.len() != n || gram.shape() != (n, n) {
        return Err(Error::Dimension { expected: n, got: alpha.len() });
    }
    let f = gram * alpha;
    let lp = DVector::from_iterator(n, f.iter().zip(y.iter()).map(|(f, y)| loss.derivative(*y, *f)));
    Ok(gram * (lp / n as f64 + alpha * (2.0 * lambda)))
}

/// Fixed-step gradient descent on the stabilised objective from `α = 0`.
///
/// The start point is deterministic, so `seed` does not influence the
/// result; it is accepted to keep all trainers on the same signature.
pub fn train_gd(
    gram: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    loss: Loss,
    seed: u64,
    config: TrainConfig,
) -> Result<GdSolution> {
    let _ = seed;
    let n = check_problem(gram, y, lambda)?;
    if config.steps == 0 || !(config.step_size > 0.0) {
        return Err(Error::Invalid("steps must be ≥ 1 and step_size > 0".into()));
    }
    let mut alpha = DVector::zeros(n);
    let mut history = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let obj = stabilized_objective(&alpha, gram, y, lambda, loss)?.total;
        if !obj.is_finite() {
            return Err(Error::Divergence { step, value: obj });
        }
        history.push(obj);
        if step == config.steps {
            break;
        }
        let g = gradient_alpha(&alpha, gram, y, lambda, loss)?;
        alpha -= g * config.step_size;
    }
    let gradient_norm = gradient_alpha(&alpha, gram, y, lambda, loss)?.norm();
    Ok(GdSolution { alpha, gradient_norm, history })
}

/// A fitted model `f(x) = Σ_i α_i K(x, x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedKSVM {
    pub alpha: DVector<f64>,
    pub training_points: Vec<Vec<f64>>,
    pub lambda: f64,
    pub kernel_def: KernelDefinition,
}

impl TrainedKSVM {
    pub fn new(kernel_def: KernelDefinition, training_points: Vec<Vec<f64>>, alpha: DVector<f64>, lambda: f64) -> Result<Self> {
        if alpha.len() != training_points.len() {
            return Err(Error::Dimension { expected: training_points.len(), got: alpha.len() });
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("alpha".into()));
        }
        Ok(Self { alpha, training_points, lambda, kernel_def })
    }

    /// Squared-loss fit with the closed-form solver.
    pub fn fit_squared(kernel_def: KernelDefinition, data: &Dataset, lambda: f64) -> Result<(Self, SquaredSolution)> {
        let g = gram(&kernel_def, &data.xs)?;
        let sol = train_squared(&g, &DVector::from_column_slice(&data.ys), lambda)?;
        Ok((Self::new(kernel_def, data.xs.clone(), sol.alpha.clone(), lambda)?, sol))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut f = 0.0;
        for (a, xi) in self.alpha.iter().zip(&self.training_points) {
            f += a * self.kernel_def.eval(x, xi)?;
        }
        Ok(f)
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let c = cross_gram(&self.kernel_def, xs, &self.training_points)?;
        Ok((c * &self.alpha).iter().copied().collect())
    }

    fn arch_line(def: &KernelDefinition) -> String {
        let a = &def.arch;
        let widths: Vec<String> = a.widths().iter().map(usize::to_string).collect();
        let acts: Vec<&str> = a.activations().iter().map(|s| s.name()).collect();
        let variant = match def.variant {
            Variant::Krein => "krein",
            Variant::Associated => "associated",
        };
        format!("{} {} {} {}", variant, a.input_dim(), widths.join(","), acts.join(","))
    }

    /// Text serialisation: architecture reference line, `λ`, the training
    /// points and `α`, numbers with 17 significant digits.
    pub fn to_text(&self) -> String {
        let n = self.training_points.len();
        let dim = self.kernel_def.arch.input_dim();
        let mut out = format!("kernel {}\nlambda {}\npoints {n} {dim}\n", Self::arch_line(&self.kernel_def), fmt17(self.lambda));
        for x in &self.training_points {
            let row: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str("alpha\n");
        for a in self.alpha.iter() {
            out.push_str(&fmt17(*a));
            out.push('\n');
        }
        out
    }

    /// Parses [`TrainedKSVM::to_text`] output; the architecture reference
    /// must match `kernel_def`.
    pub fn from_text(kernel_def: KernelDefinition, text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Invalid(format!("model file: malformed {what}"));
        let mut lines = text.lines();
        let head = lines.next().and_then(|l| l.strip_prefix("kernel ")).ok_or_else(|| bad("kernel line"))?;
        if head != Self::arch_line(&kernel_def) {
            return Err(Error::Invalid(format!("model file was written for `{head}`")));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("number"));
        let lambda = num(lines.next().and_then(|l| l.strip_prefix("lambda ")).ok_or_else(|| bad("lambda line"))?)?;
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("points "))
            .ok_or_else(|| bad("points line"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("points line")))
            .collect::<Result<_>>()?;
        let [n, dim] = dims[..] else { return Err(bad("points line")) };
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> =
                lines.next().ok_or_else(|| bad("point"))?.split_whitespace().map(num).collect::<Result<_>>()?;
            if row.len() != dim {
                return Err(Error::Dimension { expected: dim, got: row.len() });
            }
            points.push(row);
        }
        if lines.next() != Some("alpha") {
            return Err(bad("alpha header"));
        }
        let alpha: Vec<f64> = lines.filter(|l| !l.trim().is_empty()).map(num).collect::<Result<_>>()?;
        Self::new(kernel_def, points, DVector::from_vec(alpha), lambda)
    }
}
