//! Experiment configuration, read from TOML.
//!
//! ```toml
//! name = "exp-decay-small"
//!
//! [model]
//! kind = "affine"          # or "log-uniform"
//! decay = "exponential"    # fast-algebraic, slow-algebraic, zero
//! terms = 5
//! mean = 2.0
//!
//! [run]
//! max_level = 4
//! reference_level = 5      # optional; enables the mean errors
//! eps0 = 0.25
//! samples = 100
//! seed = 1
//! sample_seed = 2024
//! tree = "balanced"
//!
//! [budget]
//! max_entry_evaluations = 10000000
//! max_pde_solves = 1000000
//! max_rank = 150
//!
//! [output]
//! dir = "out"
//! save_surrogate = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::MAX_LEVEL;
use crate::field::{CoefficientModel, Decay, FieldKind};
use crate::multilevel::{MlOptions, DEFAULT_EPS0};
use crate::tree::TreeShape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: FieldKind,
    pub decay: Decay,
    pub terms: usize,
    /// Mean of the affine coefficient; unused by the log-uniform model.
    #[serde(default = "default_mean")]
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub max_level: usize,
    #[serde(default)]
    pub reference_level: Option<usize>,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Seed of the cross approximation.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Seed of the error samples, shared by every compared run.
    #[serde(default = "default_sample_seed")]
    pub sample_seed: u64,
    #[serde(default)]
    pub tree: TreeShape,
    #[serde(default = "default_crosses")]
    pub crosses_per_loop: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_entry_evaluations: usize,
    pub max_pde_solves: usize,
    pub max_rank: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let d = MlOptions::default();
        BudgetConfig {
            max_entry_evaluations: d.max_entry_evaluations,
            max_pde_solves: d.max_pde_solves,
            max_rank: d.max_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Writes every level tensor as JSON next to the tables.
    #[serde(default)]
    pub save_surrogate: bool,
}

fn default_mean() -> f64 {
    2.0
}
fn default_eps0() -> f64 {
    DEFAULT_EPS0
}
fn default_samples() -> usize {
    100
}
fn default_seed() -> u64 {
    1
}
fn default_sample_seed() -> u64 {
    2024
}
fn default_crosses() -> usize {
    3
}

/// Configurations shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("exp-decay-small", include_str!("../configs/exp-decay-small.toml")),
    ("constant-coefficient", include_str!("../configs/constant-coefficient.toml")),
    ("log-uniform-small", include_str!("../configs/log-uniform-small.toml")),
    ("exp-decay-n10-l7", include_str!("../configs/exp-decay-n10-l7.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn config_error<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Reads `arg` as a file path, falling back to a bundled configuration
    /// of that name when no such file exists.
    pub fn resolve(arg: &str) -> Result<Self> {
        if !Path::new(arg).exists() {
            if let Some(text) = bundled(arg) {
                return Self::parse(text);
            }
        }
        Self::load(arg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if self.model.terms == 0 {
            return config_error("model.terms must be at least 1");
        }
        if r.max_level > MAX_LEVEL {
            return config_error(format!("run.max_level must be at most {MAX_LEVEL}"));
        }
        if let Some(lr) = r.reference_level {
            if lr <= r.max_level || lr > MAX_LEVEL {
                return config_error(format!(
                    "run.reference_level must lie in {}..={MAX_LEVEL}",
                    r.max_level + 1
                ));
            }
        }
        if !(r.eps0.is_finite() && r.eps0 > 0.0) {
            return config_error("run.eps0 must be positive");
        }
        if r.samples == 0 {
            return config_error("run.samples must be at least 1");
        }
        if r.crosses_per_loop == 0 {
            return config_error("run.crosses_per_loop must be at least 1");
        }
        let b = &self.budget;
        if b.max_entry_evaluations == 0 || b.max_pde_solves == 0 || b.max_rank == 0 {
            return config_error("budgets must be positive");
        }
        if !self.model.mean.is_finite() {
            return config_error("model.mean must be finite");
        }
        self.coefficient_model()?;
        Ok(())
    }

    /// The coefficient model; rejections surface as configuration errors.
    pub fn coefficient_model(&self) -> Result<CoefficientModel> {
        let m = &self.model;
        CoefficientModel::new(m.kind, m.decay, m.terms, m.mean).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn ml_options(&self) -> MlOptions {
        MlOptions {
            eps0: self.run.eps0,
            shape: self.run.tree,
            seed: self.run.seed,
            crosses_per_loop: self.run.crosses_per_loop,
            max_rank: self.budget.max_rank,
            max_entry_evaluations: self.budget.max_entry_evaluations,
            max_pde_solves: self.budget.max_pde_solves,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[model]
kind = "affine"
decay = "exponential"
terms = 3
[run]
max_level = 2
"#;

    #[test]
    fn defaults_are_filled() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model.mean, 2.0);
        assert_eq!(c.run.eps0, 0.25);
        assert_eq!(c.run.samples, 100);
        assert_eq!(c.run.tree, TreeShape::Balanced);
        assert_eq!(c.budget, BudgetConfig::default());
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let cases = [
            MINIMAL.replace("terms = 3", "terms = 0"),
            MINIMAL.replace("max_level = 2", "max_level = 2\nreference_level = 2"),
            MINIMAL.replace("max_level = 2", "max_level = 2\neps0 = -1.0"),
            MINIMAL.replace("decay = \"exponential\"", "decay = \"cubic\""),
            MINIMAL.replace("[run]", "[run]\nunknown = 1"),
            MINIMAL.replace("decay = \"exponential\"", "decay = \"slow-algebraic\"\nmean = 0.1"),
            "not toml at all [".to_string(),
        ];
        for text in cases {
            assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(ExperimentConfig::load("/nonexistent/cfg.toml"), Err(Error::Config(_))));
    }

    #[test]
    fn bundled_configs_parse() {
        for (name, text) in BUNDLED {
            let c = ExperimentConfig::parse(text).unwrap();
            assert_eq!(c.name, name);
        }
        let small = ExperimentConfig::resolve("exp-decay-small").unwrap();
        assert_eq!((small.model.terms, small.run.max_level), (5, 4));
        assert!(ExperimentConfig::resolve("no-such-config").is_err());
    }
}
