//! Batch runner: parse a config, run one named experiment, write artifacts.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

use gpelab_core::GpeError;

pub use config::{describe, parse_config, ConfigError, Experiment, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerical(GpeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("expectation failed: {0}")]
    Expectation(String),
}

impl From<GpeError> for RunError {
    fn from(e: GpeError) -> Self {
        match e {
            GpeError::Io(io) => RunError::Io(io),
            other => RunError::Numerical(other),
        }
    }
}

impl RunError {
    /// 2 config, 3 numerical, 4 expectation, 5 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Expectation(_) => 4,
            RunError::Io(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(dir) = &self.output {
            cfg.output_dir = dir.clone();
            cfg.canonical.push_str(&format!("output.dir = {}\n", dir.display()));
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.canonical.push_str(&format!("run.seed = {seed}\n"));
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config(&text)?)
}

/// Runs the configured experiment. The manifest is written first with status
/// `running`, then rewritten with the terminal status whatever the outcome.
pub fn run(cfg: &RunConfig, say: &dyn Fn(&str)) -> Result<String, RunError> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir)?;
    let mut manifest = output::Manifest::new(dir, cfg.experiment.name(), &cfg.canonical, cfg.seed, &cfg.grid);
    manifest.write()?;
    std::fs::write(dir.join("config.txt"), &cfg.canonical)?;

    use experiments::*;
    let result = match cfg.experiment {
        Experiment::Evolve => run_evolve(cfg, dir, say),
        Experiment::GroundState => run_groundstate(cfg, dir, say),
        Experiment::VirialAudit => run_virial_audit(cfg, dir, say),
        Experiment::RieszSweep => run_riesz_sweep(cfg, dir, say),
        Experiment::Dichotomy => run_dichotomy(cfg, dir, say),
    };
    match result {
        Ok((finished, report)) => {
            report.write(&dir.join("report.txt"))?;
            manifest.set("status", finished.status.clone());
            if let Err(why) = &finished.expectation {
                manifest.set("expectation", format!("failed: {why}"));
            }
            manifest.write()?;
            finished.expectation.map_err(RunError::Expectation)?;
            Ok(finished.status)
        }
        Err(e) => {
            let label = match &e {
                RunError::Numerical(_) => "numerical_failure",
                RunError::Io(_) => "io_failure",
                _ => "failed",
            };
            manifest.set("status", label);
            manifest.set("error", e.to_string().replace('\n', " "));
            // best effort: the original error matters more than this one
            let _ = manifest.write();
            Err(e)
        }
    }
}
