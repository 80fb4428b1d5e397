//! Experiment configuration (JSON) and dataset loading (CSV).

use std::path::{Path, PathBuf};

use deepkrein::activations::ActivationSpec;
use deepkrein::netcore::{Architecture, Dataset, Loss, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActivationConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_terms: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub input_dim: usize,
    /// `H_0 … H_{d−1}`; must end in 1.
    pub widths: Vec<usize>,
    /// One entry per layer, or a single entry used for every layer.
    pub activations: Vec<ActivationConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { steps: default_steps(), step_size: default_step_size() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Ball radius; defaults to `rnn_radius` of the weights in use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_nn: Option<f64>,
    /// Sample size in the bounds; defaults to the dataset size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_trials")]
    pub hypothesis_draws: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { r_nn: None, n: None, trials: default_trials(), hypothesis_draws: default_trials() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SparsityConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self { epsilons: default_epsilons() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// `"krein"` or `"associated"`.
    #[serde(default = "default_variant")]
    pub variant: String,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { variant: default_variant() }
    }
}

/// The whole experiment description.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub architecture: ArchitectureConfig,
    /// CSV with header `x0,…,x{D−1},y`; relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Weight file (as written by `train-net`); relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default = "default_loss")]
    pub loss: String,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_truncation")]
    pub truncation: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Report path; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub sparsity: SparsityConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
}

fn default_steps() -> usize {
    500
}
fn default_step_size() -> f64 {
    0.05
}
fn default_trials() -> usize {
    200
}
fn default_epsilons() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}
fn default_variant() -> String {
    "krein".into()
}
fn default_loss() -> String {
    "squared".into()
}
fn default_lambda() -> f64 {
    1e-2
}
fn default_truncation() -> u32 {
    deepkrein::pushforward::DEFAULT_TRUNCATION
}

impl ExperimentConfig {
    /// Parses JSON; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn architecture(&self) -> Result<Architecture, CliError> {
        let a = &self.architecture;
        let specs = a
            .activations
            .iter()
            .map(|c| {
                let s = ActivationSpec::from_name(&c.name, c.coefficients.clone(), c.c)?;
                match c.max_terms {
                    Some(m) => s.with_max_terms(m),
                    None => Ok(s),
                }
            })
            .collect::<deepkrein::Result<Vec<_>>>()?;
        let specs = if specs.len() == 1 { vec![specs[0].clone(); a.widths.len()] } else { specs };
        Ok(Architecture::new(a.input_dim, a.widths.clone(), specs)?)
    }

    pub fn loss(&self) -> Result<Loss, CliError> {
        Ok(Loss::from_name(&self.loss)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { steps: self.training.steps, step_size: self.training.step_size }
    }

    /// Checks the scalar fields.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.truncation < 1 {
            return Err(CliError::Config("truncation must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(CliError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.training.steps == 0 || !(self.training.step_size > 0.0) {
            return Err(CliError::Config("training needs steps ≥ 1 and step_size > 0".into()));
        }
        if self.bounds.trials == 0 || self.bounds.hypothesis_draws == 0 {
            return Err(CliError::Config("bounds needs trials ≥ 1 and hypothesis_draws ≥ 1".into()));
        }
        if self.sparsity.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(CliError::Config("sparsity epsilons must be positive".into()));
        }
        if !matches!(self.kernel.variant.as_str(), "krein" | "associated") {
            return Err(CliError::Config(format!("unknown kernel variant `{}`", self.kernel.variant)));
        }
        self.loss()?;
        self.architecture()?;
        Ok(())
    }
}

/// Resolves `path` against the directory holding the config file.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Reads a CSV dataset with header `x0,…,x{D−1},y`.
pub fn load_dataset(path: &Path, dim: usize) -> Result<Dataset, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?.clone();
    let expected: Vec<String> = (0..dim).map(|j| format!("x{j}")).chain(std::iter::once("y".to_string())).collect();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(CliError::Config(format!(
            "{}: header must be `{}`, found `{}`",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let vals = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Config(format!("{}: data row {}: {e}", path.display(), row + 1)))?;
        ys.push(vals[dim]);
        xs.push(vals[..dim].to_vec());
    }
    if xs.is_empty() {
        return Err(CliError::Config(format!("{}: dataset is empty", path.display())));
    }
    Ok(Dataset::new(xs, ys)?)
}
