//! Loads a config, runs its experiment and writes the artifacts.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{ConfigError, RawConfig};
use crate::experiments::run_kind;
use crate::plot::render;
use crate::report::{num, Outcome};
use crate::schema::ExperimentConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_PRECISION: i32 = 3;

#[derive(Debug)]
pub enum RunError {
    Config { path: PathBuf, err: ConfigError },
    Model(idsim::Error),
    Io { path: PathBuf, err: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } | RunError::Io { .. } => EXIT_USAGE,
            RunError::Model(e) => match e {
                idsim::Error::Parameter { .. } | idsim::Error::Grid(_) | idsim::Error::Unsupported(_) => EXIT_USAGE,
                idsim::Error::NotConverged { .. } | idsim::Error::Precision { .. } | idsim::Error::Efficiency { .. } => EXIT_PRECISION,
            },
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config { path, err } => write!(f, "{}: {err}", path.display()),
            RunError::Model(e) => write!(f, "{e}"),
            RunError::Io { path, err } => write!(f, "{}: {err}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plots: bool,
}

#[derive(Debug)]
pub struct RunReport {
    pub kind: &'static str,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub outcome: Outcome,
    pub seconds: f64,
    pub max_seconds: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if !self.outcome.passed() {
            EXIT_TOLERANCE
        } else if self.seconds > self.max_seconds {
            EXIT_PRECISION
        } else {
            EXIT_PASS
        }
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, RunError> {
    let wrap = |err| RunError::Config { path: path.to_path_buf(), err };
    ExperimentConfig::from_raw(&RawConfig::load(path).map_err(wrap)?).map_err(wrap)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|err| RunError::Io { path: path.to_path_buf(), err })
}

/// Runs `cfg` and writes `results.csv`, `summary.txt`, extra tables and,
/// when enabled, `plots/*.svg` under the output directory.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    let seed = opts.seed.unwrap_or(cfg.seed);
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("results/{}", cfg.kind.name)));
    let start = Instant::now();
    let outcome = run_kind(cfg, seed).map_err(RunError::Model)?;
    let seconds = start.elapsed().as_secs_f64();
    let max_seconds = cfg.tol("max_seconds");

    fs::create_dir_all(&out_dir).map_err(|err| RunError::Io { path: out_dir.clone(), err })?;
    let mut csv = Vec::new();
    outcome.write_csv(&mut csv).expect("in-memory write");
    write(&out_dir.join("results.csv"), &csv)?;
    for (name, bytes) in &outcome.tables {
        write(&out_dir.join(name), bytes)?;
    }
    let mut summary = outcome.summary(cfg.kind.name, seed);
    let within = seconds <= max_seconds;
    summary.push_str(&format!(
        "{} wall clock: {:.1} s (budget {})\n",
        if within { "PASS" } else { "FAIL" },
        seconds,
        num(max_seconds)
    ));
    write(&out_dir.join("summary.txt"), summary.as_bytes())?;
    if opts.plots {
        let dir = out_dir.join("plots");
        fs::create_dir_all(&dir).map_err(|err| RunError::Io { path: dir.clone(), err })?;
        for p in &outcome.plots {
            write(&dir.join(format!("{}.svg", p.name)), render(p).as_bytes())?;
        }
    }
    Ok(RunReport { kind: cfg.kind.name, seed, out_dir, outcome, seconds, max_seconds })
}
