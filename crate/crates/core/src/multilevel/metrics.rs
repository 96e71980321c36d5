//! Sampled and mean errors of a multilevel surrogate.
//!
//! All norms are the `H^1_0` seminorm. Nested grids make it invariant under
//! prolongation, so level vectors are normed on their own level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::surrogate::{combine_levels, psi_of_levels, MLSurrogate};
use crate::error::{invalid, Result};
use crate::fem::{prolongate, FemHierarchy};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub samples: usize,
    /// Relative sampled error of the surrogate against direct solves on the
    /// top level.
    pub ml_u: f64,
    /// Per level: sampled error of the level interpolant against the exact
    /// difference `u_l - u_{l-1}`, relative to the top-level solution norm.
    pub level_u: Vec<f64>,
    /// Per level: sampled norm of the level interpolant itself, same scaling.
    pub level_share: Vec<f64>,
    /// Relative error of the mean against the reference surrogate.
    pub e_u: Option<f64>,
    /// Relative sampled error of `psi(u) = int u dx`.
    pub ml_psi: f64,
    /// Relative error of the mean of `psi` against the reference surrogate.
    pub e_psi: Option<f64>,
}

/// `m` points drawn uniformly from `[-1, 1]^n`; fixed by `seed`.
pub fn sample_parameters(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

struct SampleTerms {
    level_err: Vec<f64>,
    level_norm: Vec<f64>,
    total_err: f64,
    solution: f64,
    psi_err: f64,
    psi: f64,
}

fn sample_terms(s: &MLSurrogate, fem: &FemHierarchy, y: &[f64]) -> Result<SampleTerms> {
    let top = s.top_level()?;
    let approx = s.eval_levels(y)?;
    let mut prev: Option<Vec<f64>> = None;
    let mut diffs = Vec::with_capacity(top + 1);
    let mut level_err = Vec::with_capacity(top + 1);
    let mut level_norm = Vec::with_capacity(top + 1);
    for (l, zl) in approx.iter().enumerate() {
        let lev = fem.level(l)?;
        let u = lev.solve_model(s.model(), y)?;
        let mut d = u.clone();
        if let Some(p) = &prev {
            for (a, b) in d.iter_mut().zip(prolongate(p, l)?) {
                *a -= b;
            }
        }
        let exact = lev.to_h1(&d);
        let diff: Vec<f64> = zl.iter().zip(&exact).map(|(a, b)| a - b).collect();
        level_err.push(sq(&diff));
        level_norm.push(sq(zl));
        diffs.push(diff);
        prev = Some(u);
    }
    let u_top = prev.expect("at least one level");
    let lev = fem.level(top)?;
    let err = combine_levels(fem, &diffs)?;
    let psi = lev.functional_psi(&u_top);
    Ok(SampleTerms {
        level_err,
        level_norm,
        total_err: sq(&lev.to_h1(&err)),
        solution: sq(&lev.to_h1(&u_top)),
        psi_err: (psi_of_levels(fem, &approx)? - psi).powi(2),
        psi,
    })
}

/// Error measures of `s` from `m` samples drawn with `seed`; the mean errors
/// are computed when a reference surrogate on a level at least as fine is
/// given.
pub fn error_metrics(
    s: &MLSurrogate,
    reference: Option<&MLSurrogate>,
    fem: &FemHierarchy,
    m: usize,
    seed: u64,
) -> Result<ErrorMetrics> {
    if m == 0 {
        return invalid("at least one sample is required");
    }
    let top = s.top_level()?;
    if let Some(r) = reference {
        if r.model() != s.model() {
            return invalid("reference surrogate uses a different model");
        }
        if r.top_level()? < top {
            return invalid("reference surrogate is coarser than the surrogate");
        }
    }
    let ys = sample_parameters(s.params(), m, seed);
    let terms: Vec<SampleTerms> = ys
        .par_iter()
        .map(|y| sample_terms(s, fem, y))
        .collect::<Result<_>>()?;
    let mut level_err = vec![0.0; top + 1];
    let mut level_norm = vec![0.0; top + 1];
    let (mut total, mut sol, mut psi_err, mut psi) = (0.0, 0.0, 0.0, 0.0);
    for t in &terms {
        for l in 0..=top {
            level_err[l] += t.level_err[l];
            level_norm[l] += t.level_norm[l];
        }
        total += t.total_err;
        sol += t.solution;
        psi_err += t.psi_err;
        psi += t.psi * t.psi;
    }
    let (e_u, e_psi) = match reference {
        Some(r) => {
            let (eu, ep) = mean_errors(s, r, fem)?;
            (Some(eu), Some(ep))
        }
        None => (None, None),
    };
    Ok(ErrorMetrics {
        samples: m,
        ml_u: (total / sol).sqrt(),
        level_u: level_err.iter().map(|e| (e / sol).sqrt()).collect(),
        level_share: level_norm.iter().map(|e| (e / sol).sqrt()).collect(),
        e_u,
        ml_psi: (psi_err / psi).sqrt(),
        e_psi,
    })
}

/// Relative errors of the mean and of the mean of `psi` against `r`, with
/// the mean of `s` prolongated to the level of `r`.
pub fn mean_errors(s: &MLSurrogate, r: &MLSurrogate, fem: &FemHierarchy) -> Result<(f64, f64)> {
    let (ls, lr) = (s.top_level()?, r.top_level()?);
    if lr < ls {
        return invalid("reference surrogate is coarser than the surrogate");
    }
    let mut es = s.expectation(fem)?;
    for l in ls + 1..=lr {
        es = prolongate(&es, l)?;
    }
    let er = r.expectation(fem)?;
    let lev = fem.level(lr)?;
    let diff: Vec<f64> = es.iter().zip(&er).map(|(a, b)| a - b).collect();
    let e_u = lev.h1_seminorm(&diff) / lev.h1_seminorm(&er);
    let (ps, pr) = (s.expectation_psi(fem)?, r.expectation_psi(fem)?);
    Ok((e_u, (ps - pr).abs() / pr.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CoefficientModel, Decay, FieldKind};
    use crate::multilevel::{run_ml, MlOptions};

    #[test]
    fn samples_are_fixed_by_the_seed() {
        let a = sample_parameters(3, 5, 11);
        assert_eq!(a, sample_parameters(3, 5, 11));
        assert_ne!(a, sample_parameters(3, 5, 12));
        assert!(a.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn metrics_are_deterministic_and_self_reference_vanishes() {
        let model = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 2, 2.0).unwrap();
        let fem = FemHierarchy::new(2).unwrap();
        let s = run_ml(&model, &fem, 2, &MlOptions::default()).unwrap().surrogate;
        let a = error_metrics(&s, Some(&s), &fem, 8, 3).unwrap();
        let b = error_metrics(&s, Some(&s), &fem, 8, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.e_u, Some(0.0));
        assert_eq!(a.e_psi, Some(0.0));
        assert_eq!(a.level_u.len(), 3);
        assert!(a.ml_u.is_finite() && a.ml_u > 0.0);
    }

    #[test]
    fn mismatched_reference_is_rejected() {
        let fem = FemHierarchy::new(1).unwrap();
        let m1 = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 2, 2.0).unwrap();
        let m2 = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 2, 3.0).unwrap();
        let s1 = run_ml(&m1, &fem, 1, &MlOptions::default()).unwrap().surrogate;
        let s2 = run_ml(&m2, &fem, 1, &MlOptions::default()).unwrap().surrogate;
        assert!(error_metrics(&s1, Some(&s2), &fem, 4, 1).is_err());
        let coarse = run_ml(&m1, &fem, 0, &MlOptions::default()).unwrap().surrogate;
        assert!(error_metrics(&s1, Some(&coarse), &fem, 4, 1).is_err());
        assert!(error_metrics(&s1, None, &fem, 0, 1).is_err());
    }
}
