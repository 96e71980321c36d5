//! Parametric diffusion coefficients on the unit square.
//!
//! The fluctuation is `s(y, x) = sum_n sqrt(lambda_n) b_n(x) y_n` with
//! `b_n(x) = sin(2 pi n x_1) sin(2 pi n x_2)`. The affine kind returns
//! `mean + s`, the log-uniform kind `exp(s)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decay {
    /// `lambda_n = exp(-n)`.
    Exponential,
    /// `lambda_n = n^-4`.
    FastAlgebraic,
    /// `lambda_n = n^-2`.
    SlowAlgebraic,
    /// `lambda_n = 0`; turns the coefficient into a constant.
    Zero,
}

impl std::str::FromStr for Decay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(Decay::Exponential),
            "fast-algebraic" => Ok(Decay::FastAlgebraic),
            "slow-algebraic" => Ok(Decay::SlowAlgebraic),
            "zero" => Ok(Decay::Zero),
            other => invalid(format!("unknown decay law `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Affine,
    LogUniform,
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(FieldKind::Affine),
            "log-uniform" => Ok(FieldKind::LogUniform),
            other => invalid(format!("unknown field kind `{other}`")),
        }
    }
}

/// `lambda_n` for `n >= 1`.
pub fn eigenvalue(n: usize, decay: Decay) -> Result<f64> {
    if n == 0 {
        return invalid("eigenvalue index starts at 1");
    }
    let x = n as f64;
    Ok(match decay {
        Decay::Exponential => (-x).exp(),
        Decay::FastAlgebraic => x.powi(-4),
        Decay::SlowAlgebraic => x.powi(-2),
        Decay::Zero => 0.0,
    })
}

/// `sin(2 pi n t)` with the argument reduced modulo one period, so the value
/// is exactly zero whenever `n t` is an integer.
pub fn sine_mode(n: usize, t: f64) -> f64 {
    (2.0 * PI * (n as f64 * t).fract()).sin()
}

/// `b_n(x)` for `n >= 1`.
pub fn basis(n: usize, x: [f64; 2]) -> f64 {
    sine_mode(n, x[0]) * sine_mode(n, x[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    kind: FieldKind,
    decay: Decay,
    terms: usize,
    mean: f64,
    sqrt_lambda: Vec<f64>,
    /// Sampled minimum accepted in place of a nonpositive worst-case bound.
    relaxed_minimum: Option<f64>,
}

/// Spatial grid and sample count of the sampled ellipticity check.
const RELAX_GRID: usize = 33;
const RELAX_SAMPLES: usize = 1000;
const RELAX_FLOOR: f64 = 0.05;
const RELAX_SEED: u64 = 0x5eed;

impl CoefficientModel {
    /// Builds and validates a model. An affine model whose worst-case lower
    /// bound is nonpositive is accepted when its sampled minimum stays above
    /// `0.05`; the sampled value is kept in [`Self::relaxed_minimum`].
    pub fn new(kind: FieldKind, decay: Decay, terms: usize, mean: f64) -> Result<Self> {
        if terms == 0 {
            return Err(Error::ModelInvalid("at least one parametric term is required".into()));
        }
        if !mean.is_finite() {
            return Err(Error::ModelInvalid(format!("mean {mean} is not finite")));
        }
        let sqrt_lambda = (1..=terms)
            .map(|n| eigenvalue(n, decay).map(f64::sqrt))
            .collect::<Result<Vec<_>>>()?;
        let mut model = CoefficientModel {
            kind,
            decay,
            terms,
            mean,
            sqrt_lambda,
            relaxed_minimum: None,
        };
        if kind == FieldKind::Affine {
            let (lo, _) = model.worst_case_bounds();
            if lo <= 0.0 {
                let sampled = model.sampled_minimum();
                if sampled <= RELAX_FLOOR {
                    return Err(Error::ModelInvalid(format!(
                        "worst-case lower bound {lo:.4} and sampled minimum {sampled:.4} \
                         leave the coefficient without a positive lower bound"
                    )));
                }
                log::warn!(
                    "worst-case lower bound {lo:.4} is nonpositive; accepting sampled minimum {sampled:.4}"
                );
                model.relaxed_minimum = Some(sampled);
            }
        }
        Ok(model)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn decay(&self) -> Decay {
        self.decay
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sqrt_lambda(&self) -> &[f64] {
        &self.sqrt_lambda
    }

    pub fn relaxed_minimum(&self) -> Option<f64> {
        self.relaxed_minimum
    }

    fn worst_case_bounds(&self) -> (f64, f64) {
        let s: f64 = self.sqrt_lambda.iter().sum();
        match self.kind {
            FieldKind::Affine => (self.mean - s, self.mean + s),
            FieldKind::LogUniform => ((-s).exp(), s.exp()),
        }
    }

    /// Worst-case bounds from `|b_n| <= 1`; errors if the affine lower bound
    /// is nonpositive.
    pub fn ellipticity_bounds(&self) -> Result<(f64, f64)> {
        let (lo, hi) = self.worst_case_bounds();
        if lo <= 0.0 {
            return Err(Error::ModelInvalid(format!(
                "worst-case lower bound {lo:.4} is not positive"
            )));
        }
        Ok((lo, hi))
    }

    fn sampled_minimum(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(RELAX_SEED);
        let h = 1.0 / (RELAX_GRID - 1) as f64;
        let table: Vec<Vec<f64>> = (1..=self.terms)
            .map(|n| {
                (0..RELAX_GRID)
                    .map(|i| sine_mode(n, i as f64 * h))
                    .collect()
            })
            .collect();
        let mut min = f64::INFINITY;
        for _ in 0..RELAX_SAMPLES {
            let c: Vec<f64> = self
                .sqrt_lambda
                .iter()
                .map(|s| s * rng.random_range(-1.0..=1.0))
                .collect();
            for i in 0..RELAX_GRID {
                for j in 0..RELAX_GRID {
                    let s: f64 = c
                        .iter()
                        .zip(&table)
                        .map(|(cn, t)| cn * t[i] * t[j])
                        .sum();
                    min = min.min(self.from_fluctuation(s));
                }
            }
        }
        min
    }

    fn check_parameters(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.terms {
            return invalid(format!("expected {} parameters, got {}", self.terms, y.len()));
        }
        if let Some(v) = y.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return invalid(format!("parameter {v} outside [-1, 1]"));
        }
        Ok(())
    }

    /// Coefficients `sqrt(lambda_n) y_n` of the fluctuation.
    pub fn fluctuation_weights(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_parameters(y)?;
        Ok(self.sqrt_lambda.iter().zip(y).map(|(s, v)| s * v).collect())
    }

    /// Coefficient value from the fluctuation `s`.
    pub fn from_fluctuation(&self, s: f64) -> f64 {
        match self.kind {
            FieldKind::Affine => self.mean + s,
            FieldKind::LogUniform => s.exp(),
        }
    }

    pub fn evaluate(&self, y: &[f64], x: [f64; 2]) -> Result<f64> {
        let w = self.fluctuation_weights(y)?;
        let s: f64 = w.iter().enumerate().map(|(n, c)| c * basis(n + 1, x)).sum();
        Ok(self.from_fluctuation(s))
    }
}
