//! Config-driven experiment runner for `deepkrein`.
//!
//! Every subcommand reads an [`ExperimentConfig`] (JSON), runs one
//! experiment and writes a JSON report with the sections `config_echo`,
//! `results`, `diagnostics` and `warnings`. Reports and side files are written
//! atomically and are byte-identical for identical inputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use thiserror::Error;

mod commands;
pub mod config;

pub use config::ExperimentConfig;

/// Exit code for validation errors.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical-domain errors.
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Lib(#[from] deepkrein::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
            CliError::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Lib(_) => EXIT_VALIDATION,
        }
    }
}

/// The seven experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Flatten,
    Kernel,
    TrainNet,
    TrainKsvm,
    Compare,
    Bounds,
    Sparsity,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flatten => "flatten",
            Command::Kernel => "kernel",
            Command::TrainNet => "train-net",
            Command::TrainKsvm => "train-ksvm",
            Command::Compare => "compare",
            Command::Bounds => "bounds",
            Command::Sparsity => "sparsity",
        }
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trunc: Option<u32>,
}

/// A report under construction.
#[derive(Debug, Default)]
pub struct Report {
    pub results: Map<String, Value>,
    pub diagnostics: Map<String, Value>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn result(&mut self, key: &str, v: impl Into<Value>) {
        self.results.insert(key.into(), v.into());
    }

    pub fn diag(&mut self, key: &str, v: impl Into<Value>) {
        self.diagnostics.insert(key.into(), v.into());
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

/// JSON number, or a string for non-finite values (JSON has no ∞/NaN).
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(format!("{v}")), Value::Number)
}

pub fn nums(vs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(vs.into_iter().map(num).collect())
}

/// Writes `contents` to `path` via a temporary file in the same directory
/// and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Context handed to every subcommand.
pub struct Context {
    pub config: ExperimentConfig,
    /// Directory of the config file; relative paths resolve against it.
    pub base: PathBuf,
    /// Report path; side files are named after it.
    pub out: PathBuf,
}

impl Context {
    /// A side-file path `<report stem>.<suffix>` next to the report.
    pub fn side_file(&self, suffix: &str) -> PathBuf {
        let stem = self.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
        self.out.with_file_name(format!("{stem}.{suffix}"))
    }
}

/// Loads the config, applies overrides, runs `command` and writes the
/// report. Returns the report path.
pub fn run(command: Command, config_path: &Path, overrides: &Overrides) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", config_path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(t) = overrides.trunc {
        config.truncation = t;
    }
    config.validate()?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&overrides.out, &config.report) {
        (Some(o), _) => o.clone(),
        (None, Some(r)) => config::resolve(&base, r),
        (None, None) => return Err(CliError::Config("no report path: pass --out or set `report`".into())),
    };
    let ctx = Context { config, base, out };
    let mut report = Report::default();
    commands::dispatch(command, &ctx, &mut report)?;
    let mut doc = Map::new();
    doc.insert("command".into(), Value::String(command.name().into()));
    doc.insert("config_echo".into(), serde_json::to_value(&ctx.config).expect("config serialises"));
    doc.insert("results".into(), Value::Object(report.results));
    doc.insert("diagnostics".into(), Value::Object(report.diagnostics));
    doc.insert("warnings".into(), Value::Array(report.warnings.into_iter().map(Value::String).collect()));
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(doc)).expect("report serialises");
    bytes.push(b'\n');
    write_atomic(&ctx.out, &bytes)?;
    Ok(ctx.out)
}
