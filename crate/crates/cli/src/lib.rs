//! Command implementations behind the `pulsefront` binary.
//!
//! Every command writes into `<out>/<scenario hash>/` and appends a
//! [`RunRecord`] to `manifest.jsonl` there.

pub mod commands;
pub mod sweep;
pub mod verify;

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pulsefront::config::ScenarioConfig;
use pulsefront::grid::PeriodicGrid;
use pulsefront::spectral::{DispersionOptions, EigenOptions};
use pulsefront::CoefficientField;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Solver(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) | CliError::Io(_) | CliError::Csv(_) => 2,
        }
    }

    pub fn solver(e: impl std::fmt::Display) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<pulsefront::ConfigError> for CliError {
    fn from(e: pulsefront::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Exit status when every computation succeeded but a verification check failed.
pub const EXIT_VERIFICATION: i32 = 3;

/// What a command prints and whether it counts as a verification failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub failed: bool,
}

impl Outcome {
    pub fn line(&mut self, s: impl AsRef<str>) {
        self.stdout.push_str(s.as_ref());
        self.stdout.push('\n');
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed {
            EXIT_VERIFICATION
        } else {
            0
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub tol: Option<f64>,
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// A parsed scenario, its field and its output directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ScenarioConfig,
    pub field: CoefficientField,
    pub hash: String,
    pub run_dir: PathBuf,
}

impl Context {
    pub fn load(path: &Path, global: &GlobalOptions) -> Result<Self, CliError> {
        let config = ScenarioConfig::from_file(path)?;
        Self::from_config(config, global)
    }

    pub fn from_config(mut config: ScenarioConfig, global: &GlobalOptions) -> Result<Self, CliError> {
        if let Some(tol) = global.tol {
            if !(tol > 0.0) {
                return Err(CliError::Config(format!("--tol must be positive, got {tol}")));
            }
            config.solver.tol = tol;
        }
        let field = config.build_field()?;
        let hash = digest(&config.to_text());
        let root = global.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
        let run_dir = root.join(&hash);
        fs::create_dir_all(&run_dir)?;
        fs::write(run_dir.join("scenario.txt"), config.to_text())?;
        Ok(Self { config, field, hash, run_dir })
    }

    pub fn grid(&self) -> PeriodicGrid {
        PeriodicGrid::new(self.config.grid.n_cells, self.config.period).expect("validated by the config")
    }

    pub fn eig_opts(&self) -> EigenOptions {
        EigenOptions { tol: self.config.solver.tol, max_iter: self.config.solver.max_iter }
    }

    pub fn dispersion_opts(&self) -> DispersionOptions {
        let s = &self.config.solver;
        DispersionOptions { lambda_lo: s.lambda_min, lambda_hi: s.lambda_max, n_samples: s.dispersion_samples, eig: self.eig_opts() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    /// Starts a manifest entry for `command`.
    pub fn record(&self, command: &str) -> Recorder {
        Recorder {
            started: Instant::now(),
            record: RunRecord {
                scenario_hash: self.hash.clone(),
                command: command.to_string(),
                parameters: BTreeMap::new(),
                metrics: BTreeMap::new(),
                wall_time_s: 0.0,
                artifacts: Vec::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
    pub version: String,
}

pub struct Recorder {
    started: Instant,
    pub record: RunRecord,
}

impl Recorder {
    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.record.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.record.metrics.insert(key.to_string(), value);
        self
    }

    pub fn artifact(&mut self, path: &Path) -> &mut Self {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.record.artifacts.push(name);
        self
    }

    /// Appends the record to `manifest.jsonl` in `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<RunRecord, CliError> {
        self.record.wall_time_s = self.started.elapsed().as_secs_f64();
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join("manifest.jsonl"))?;
        let line = serde_json::to_string(&self.record).map_err(|e| CliError::Io(e.into()))?;
        writeln!(f, "{line}")?;
        Ok(self.record)
    }
}
