//! Configured runs and level sweeps with their tables and error rows.

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fem::{FemHierarchy, MAX_LEVEL};
use crate::multilevel::{error_metrics, run_ml, ErrorMetrics, LevelDiagnostics, MLSurrogate, TimingMode};

/// Level table of one run with maximal level `max_level`.
#[derive(Debug, Clone, Serialize)]
pub struct LevelTable {
    pub max_level: usize,
    pub levels: Vec<LevelDiagnostics>,
    /// Sampled error of each level interpolant; see [`ErrorMetrics::level_u`].
    pub eps_level: Vec<f64>,
    pub level_share: Vec<f64>,
    pub aborted: Option<String>,
}

/// Global errors of one run.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRow {
    pub max_level: usize,
    pub reference_level: Option<usize>,
    pub metrics: ErrorMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub version: String,
    pub threads: usize,
    pub timing: TimingMode,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            timing: TimingMode::current(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub tables: Vec<LevelTable>,
    pub errors: Vec<ErrorRow>,
    pub environment: Environment,
    /// Set when a budget ran out; the tables stop at the last finished level.
    pub aborted: Option<String>,
}

/// Report plus the surrogates it describes, in the order of `tables`.
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub surrogates: Vec<MLSurrogate>,
}

/// Checks a sweep list against the configuration.
pub fn check_levels(cfg: &ExperimentConfig, levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("the level list is empty".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("levels must be strictly increasing".into()));
    }
    let top = *levels.last().unwrap();
    if top > MAX_LEVEL {
        return Err(Error::Config(format!("levels must be at most {MAX_LEVEL}")));
    }
    if let Some(lr) = cfg.run.reference_level {
        if lr <= top {
            return Err(Error::Config(format!(
                "reference level {lr} must exceed the largest swept level {top}"
            )));
        }
    }
    Ok(())
}

/// Runs the multilevel method for every maximal level in `levels` and
/// measures its errors; the reference surrogate, if configured, is built once.
pub fn run_experiment(cfg: &ExperimentConfig, levels: &[usize]) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    check_levels(cfg, levels)?;
    let model = cfg.coefficient_model()?;
    let opts = cfg.ml_options();
    let finest = cfg.run.reference_level.unwrap_or(0).max(*levels.last().unwrap());
    let fem = FemHierarchy::new(finest)?;
    let mut report = ExperimentReport {
        config: cfg.clone(),
        tables: Vec::new(),
        errors: Vec::new(),
        environment: Environment::current(),
        aborted: None,
    };
    let mut surrogates = Vec::new();

    let reference = match cfg.run.reference_level {
        Some(lr) => {
            let run = run_ml(&model, &fem, lr, &opts)?;
            if let Some(msg) = run.aborted {
                report.aborted = Some(format!("reference run: {msg}"));
                return Ok(ExperimentOutcome { report, surrogates });
            }
            Some(run.surrogate)
        }
        None => None,
    };

    for &l in levels {
        let run = run_ml(&model, &fem, l, &opts)?;
        let built = run.surrogate.levels().len();
        let metrics = if built == 0 {
            None
        } else {
            let r = if run.aborted.is_none() { reference.as_ref() } else { None };
            Some(error_metrics(&run.surrogate, r, &fem, cfg.run.samples, cfg.run.sample_seed)?)
        };
        report.tables.push(LevelTable {
            max_level: l,
            levels: run.diagnostics,
            eps_level: metrics.as_ref().map(|m| m.level_u.clone()).unwrap_or_default(),
            level_share: metrics.as_ref().map(|m| m.level_share.clone()).unwrap_or_default(),
            aborted: run.aborted.clone(),
        });
        if let Some(m) = metrics {
            report.errors.push(ErrorRow {
                max_level: l,
                reference_level: if run.aborted.is_none() { cfg.run.reference_level } else { None },
                metrics: m,
            });
        }
        surrogates.push(run.surrogate);
        if let Some(msg) = run.aborted {
            report.aborted = Some(format!("run with L = {l}: {msg}"));
            break;
        }
    }
    Ok(ExperimentOutcome { report, surrogates })
}
