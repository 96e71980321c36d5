//! Three-step cross approximation of tensors whose last mode is spatial.
//!
//! 1. a greedy orthonormal basis `V` for the spatial mode from fibers sampled
//!    on random crosses,
//! 2. nested cross approximation of the reduced tensor `Y = X x_d (V S^-1)^T`,
//!    where the diagonal `S` holds the typical size of each coefficient so
//!    that every reduced spatial index carries comparable weight,
//! 3. the lift `U_d <- V S U_d`.

pub mod column_basis;
pub mod hier;
pub mod oracle;

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

pub use column_basis::{build_training_set, greedy_column_basis, BasisOptions, ColumnBasis, TrainingSet};
pub use hier::{hier_cross, CrossOptions, CrossReport, NodeReport};
pub use oracle::{
    reduce_oracle, CachedOracle, EntryFibers, EntryOracle, FiberCache, FiberOracle, FnOracle,
    HTensorOracle, ReducedOracle,
};

use crate::error::{invalid, Result};
use crate::htensor::HTensor;
use crate::tree::{DimensionTree, TreeShape};

/// Replaces the spatial leaf frame `U_d` by `V U_d`.
pub fn lift_spatial(y: &HTensor, basis: &DMatrix<f64>) -> Result<HTensor> {
    let mode = y.order() - 1;
    let leaf = y.tree().leaf_of_mode(mode);
    let u = y.frame(leaf).expect("leaf frame");
    if basis.ncols() != u.nrows() {
        return invalid(format!(
            "basis has {} columns, reduced mode has size {}",
            basis.ncols(),
            u.nrows()
        ));
    }
    y.with_leaf_frame(mode, basis * u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxOptions {
    /// Relative tolerance shared by both steps.
    pub eps: f64,
    pub shape: TreeShape,
    pub basis: BasisOptions,
    pub cross: CrossOptions,
}

impl ApproxOptions {
    pub fn new(eps: f64) -> Self {
        ApproxOptions {
            eps,
            shape: TreeShape::Balanced,
            basis: BasisOptions {
                eps_rel: eps,
                ..BasisOptions::default()
            },
            cross: CrossOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    /// Distinct fibers fetched while building the spatial basis.
    pub step1_fibers: usize,
    /// Distinct reduced-tensor entries evaluated by the cross approximation.
    pub step2_entries: usize,
    /// Fibers first needed during the cross approximation.
    pub step2_new_fibers: usize,
    pub spatial_rank: usize,
    pub training_size: usize,
    pub numerically_zero: bool,
    pub cross: CrossReport,
}

/// Approximates the tensor `X(j_1, .., j_{d-1}, i)` whose fibers are given by
/// `oracle`, to relative accuracy `opts.eps`.
pub fn approximate_tensor<R: Rng>(
    oracle: &dyn FiberOracle,
    opts: &ApproxOptions,
    rng: &mut R,
) -> Result<(HTensor, ApproxReport)> {
    if !(opts.eps.is_finite() && opts.eps > 0.0) {
        return invalid(format!("tolerance must be positive, got {}", opts.eps));
    }
    let fibers = FiberCache::new(oracle);
    approximate_with_cache(&fibers, opts, rng)
}

/// As [`approximate_tensor`], reusing fibers already held by `fibers`.
pub fn approximate_with_cache<R: Rng>(
    fibers: &FiberCache<'_>,
    opts: &ApproxOptions,
    rng: &mut R,
) -> Result<(HTensor, ApproxReport)> {
    let start = fibers.fetched();
    let basis = greedy_column_basis(fibers, &opts.basis, rng)?;
    let step1_fibers = fibers.fetched() - start;
    let tree = DimensionTree::new(fibers.param_sizes().len() + 1, opts.shape)?;
    let scale = &basis.coefficient_scale;
    let mut whitened = basis.basis.clone();
    let mut lift = basis.basis.clone();
    for (k, &s) in scale.iter().enumerate() {
        whitened.column_mut(k).unscale_mut(s);
        lift.column_mut(k).scale_mut(s);
    }
    let reduced = reduce_oracle(fibers, &whitened)?;
    let (y, cross) = hier_cross(&reduced, &tree, opts.eps, &opts.cross, rng)?;
    let step2_new_fibers = fibers.fetched() - start - step1_fibers;
    let x = lift_spatial(&y, &lift)?;
    let report = ApproxReport {
        step1_fibers,
        step2_entries: cross.evaluations,
        step2_new_fibers,
        spatial_rank: basis.rank(),
        training_size: basis.training_size,
        numerically_zero: basis.numerically_zero,
        cross,
    };
    Ok((x, report))
}

/// One row per tree node: rank, candidate block size, residual and pivots.
pub fn write_node_reports<W: Write>(out: W, nodes: &[NodeReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "node",
        "modes",
        "rank",
        "candidate_rows",
        "candidate_cols",
        "residual",
        "row_pivots",
        "col_pivots",
    ])?;
    let fmt = |p: &[Vec<usize>]| {
        p.iter()
            .map(|i| i.iter().map(usize::to_string).collect::<Vec<_>>().join(":"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for n in nodes {
        w.write_record([
            n.node.to_string(),
            format!("{}..{}", n.lo + 1, n.hi),
            n.rank.to_string(),
            n.candidate_rows.to_string(),
            n.candidate_cols.to_string(),
            format!("{:.3e}", n.residual),
            fmt(&n.row_pivots),
            fmt(&n.col_pivots),
        ])?;
    }
    w.flush()?;
    Ok(())
}
