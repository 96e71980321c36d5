//! Greedy orthonormal basis for the spatial mode from sampled fibers.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::cross::oracle::FiberCache;
use crate::error::{invalid, Error, Result};

/// Unique parametric indices built from random crosses. A cross through
/// center `c` contains every index that differs from `c` in at most one mode.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    indices: Vec<Vec<usize>>,
    seen: HashSet<Vec<usize>>,
}

impl TrainingSet {
    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Adds the cross through `center`; returns the indices that were new.
    pub fn add_cross(&mut self, sizes: &[usize], center: &[usize]) -> Vec<Vec<usize>> {
        let mut added = Vec::new();
        let mut push = |idx: Vec<usize>, set: &mut Self| {
            if set.seen.insert(idx.clone()) {
                set.indices.push(idx.clone());
                added.push(idx);
            }
        };
        push(center.to_vec(), self);
        for (m, &n) in sizes.iter().enumerate() {
            for k in 0..n {
                let mut idx = center.to_vec();
                idx[m] = k;
                push(idx, self);
            }
        }
        added
    }

    pub fn add_random_crosses<R: Rng>(
        &mut self,
        sizes: &[usize],
        crosses: usize,
        rng: &mut R,
    ) -> Vec<Vec<usize>> {
        let mut added = Vec::new();
        for _ in 0..crosses {
            let center: Vec<usize> = sizes.iter().map(|&n| rng.random_range(0..n)).collect();
            added.extend(self.add_cross(sizes, &center));
        }
        added
    }
}

/// Training set of `crosses` random crosses over `J_1 x ... x J_{d-1}`.
pub fn build_training_set<R: Rng>(
    sizes: &[usize],
    crosses: usize,
    rng: &mut R,
) -> Result<TrainingSet> {
    if crosses == 0 {
        return invalid("at least one training cross is required");
    }
    if sizes.contains(&0) {
        return invalid("parametric mode sizes must be positive");
    }
    let mut set = TrainingSet::default();
    set.add_random_crosses(sizes, crosses, rng);
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisOptions {
    pub eps_rel: f64,
    pub crosses_per_loop: usize,
    pub max_rank: usize,
    pub max_loops: usize,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            eps_rel: 1e-6,
            crosses_per_loop: 3,
            max_rank: 500,
            max_loops: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColumnBasis {
    /// Orthonormal columns spanning the trained fibers.
    pub basis: DMatrix<f64>,
    /// Every trained fiber vanished; `basis` is the first unit vector.
    pub numerically_zero: bool,
    pub training_size: usize,
    pub loops: usize,
    /// Largest residual norm over the training set, relative to the largest fiber norm.
    pub residual: f64,
    /// Largest fiber norm seen.
    pub max_norm: f64,
    /// Root-mean-square coefficient of the trained fibers along each basis
    /// column, floored at `eps_rel` times the largest one.
    pub coefficient_scale: Vec<f64>,
}

impl ColumnBasis {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// Greedy column selection: repeatedly adds the normalized residual of the
/// trained fiber worst represented by the current basis until every residual
/// is at most `eps_rel` times the largest fiber norm, then enlarges the
/// training set by fresh crosses until all new fibers are represented.
pub fn greedy_column_basis<R: Rng>(
    fibers: &FiberCache<'_>,
    opts: &BasisOptions,
    rng: &mut R,
) -> Result<ColumnBasis> {
    if !(opts.eps_rel.is_finite() && opts.eps_rel > 0.0) {
        return invalid(format!("tolerance must be positive, got {}", opts.eps_rel));
    }
    let sizes = fibers.param_sizes().to_vec();
    let n = fibers.fiber_len();
    if n == 0 {
        return invalid("fibers must be non-empty");
    }
    let mut train = build_training_set(&sizes, opts.crosses_per_loop, rng)?;
    let mut pending: Vec<Vec<usize>> = train.indices().to_vec();
    let mut residuals: Vec<DVector<f64>> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut max_norm = 0.0_f64;
    let mut loops = 0;

    loop {
        loops += 1;
        let fetched = fibers.get_many(&pending)?;
        let mut worst_new = 0.0_f64;
        for f in fetched {
            let mut v = DVector::from_column_slice(&f);
            max_norm = max_norm.max(v.norm());
            orthogonalize(&mut v, &basis);
            worst_new = worst_new.max(v.norm());
            residuals.push(v);
        }
        if loops == 1 && max_norm == 0.0 {
            let mut e = DMatrix::zeros(n, 1);
            e[(0, 0)] = 1.0;
            return Ok(ColumnBasis {
                basis: e,
                numerically_zero: true,
                training_size: train.len(),
                loops,
                residual: 0.0,
                max_norm,
                coefficient_scale: vec![1.0],
            });
        }
        let tol = opts.eps_rel * max_norm;
        if loops > 1 && worst_new <= tol {
            break;
        }
        loop {
            let (k, worst) = residuals
                .iter()
                .map(|r| r.norm())
                .enumerate()
                .fold((0, -1.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            if worst <= tol || basis.len() == n {
                break;
            }
            if basis.len() >= opts.max_rank {
                return Err(Error::Budget(format!(
                    "spatial basis would exceed {} columns",
                    opts.max_rank
                )));
            }
            let mut q = residuals[k].clone();
            orthogonalize(&mut q, &basis);
            let qn = q.norm();
            if qn <= tol {
                residuals[k] = q;
                continue;
            }
            q /= qn;
            for r in residuals.iter_mut() {
                let c = q.dot(r);
                r.axpy(-c, &q, 1.0);
            }
            basis.push(q);
        }
        if loops >= opts.max_loops {
            log::warn!("column basis stopped after {loops} training loops");
            break;
        }
        pending = train.add_random_crosses(&sizes, opts.crosses_per_loop, rng);
        if pending.is_empty() {
            break;
        }
    }

    let residual = residuals.iter().map(|r| r.norm()).fold(0.0, f64::max) / max_norm;
    let basis = DMatrix::from_columns(&basis);
    let coefficient_scale = coefficient_scale(fibers, train.indices(), &basis, opts.eps_rel)?;
    Ok(ColumnBasis {
        basis,
        numerically_zero: false,
        training_size: train.len(),
        loops,
        residual,
        max_norm,
        coefficient_scale,
    })
}

fn coefficient_scale(
    fibers: &FiberCache<'_>,
    indices: &[Vec<usize>],
    basis: &DMatrix<f64>,
    eps_rel: f64,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; basis.ncols()];
    for f in fibers.get_many(indices)? {
        let c = basis.tr_mul(&DVector::from_column_slice(&f));
        for (a, v) in acc.iter_mut().zip(c.iter()) {
            *a += v * v;
        }
    }
    let rms: Vec<f64> = acc.iter().map(|a| (a / indices.len() as f64).sqrt()).collect();
    let top = rms.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(vec![1.0; rms.len()]);
    }
    Ok(rms.iter().map(|&v| v.max(eps_rel * top)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross::oracle::{EntryFibers, FnOracle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_size_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sizes = [4, 5, 3, 6];
        let t = build_training_set(&sizes, 1, &mut rng).unwrap();
        assert_eq!(t.len(), sizes.iter().sum::<usize>() - (sizes.len() - 1));
        assert!(build_training_set(&sizes, 0, &mut rng).is_err());
    }

    #[test]
    fn equal_columns_give_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = FnOracle::new(vec![3, 3, 7], |i| (i[2] as f64).cos());
        let fibers = EntryFibers(o);
        let cache = FiberCache::new(&fibers);
        let b = greedy_column_basis(&cache, &BasisOptions::default(), &mut rng).unwrap();
        assert_eq!(b.rank(), 1);
        assert!(!b.numerically_zero);
    }

    #[test]
    fn zero_fibers_trigger_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = FnOracle::new(vec![2, 2, 5], |_| 0.0);
        let fibers = EntryFibers(o);
        let cache = FiberCache::new(&fibers);
        let b = greedy_column_basis(&cache, &BasisOptions::default(), &mut rng).unwrap();
        assert!(b.numerically_zero);
        assert_eq!(b.rank(), 1);
        assert_eq!(b.basis[(0, 0)], 1.0);
    }

    #[test]
    fn basis_is_orthonormal_and_spans() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let o = FnOracle::new(vec![4, 4, 30], |i| {
            let x = i[2] as f64 / 29.0;
            (i[0] as f64 * x).sin() + (i[1] as f64 + 1.0) * x * x
        });
        let fibers = EntryFibers(o);
        let cache = FiberCache::new(&fibers);
        let opts = BasisOptions {
            eps_rel: 1e-10,
            ..BasisOptions::default()
        };
        let b = greedy_column_basis(&cache, &opts, &mut rng).unwrap();
        let g = b.basis.transpose() * &b.basis;
        assert!((g - DMatrix::identity(b.rank(), b.rank())).amax() < 1e-12);
        assert!(b.residual <= 1e-10);
    }
}
