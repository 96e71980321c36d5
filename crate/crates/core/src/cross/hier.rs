//! Nested cross approximation in the hierarchical format.
//!
//! Nodes are processed leaves to root. At node `t` the candidate rows are the
//! full range `J_t` (leaves) or the products `R_{t1} x R_{t2}` of the
//! children's pivot rows (interior nodes); candidate columns are random
//! multi-indices of the complementary modes. Complete pivoting on this small
//! block selects `R_t`, `C_t` and the pivot matrix `S_t = Y(R_t, C_t)`.
//! Every entry needed for the frames and transfer tensors lies inside these
//! blocks, and
//!
//! `U_t = Y(J_t, C_t)` at leaves,
//! `B_t = (S_{t1}^{-1} ⊗ S_{t2}^{-1}) Y(R_{t1} x R_{t2}, C_t)` elsewhere.
//!
//! Each node keeps at least `oversampling` candidate columns beyond its rank.
//! The assembled tensor is checked against fresh random crosses and the
//! construction is repeated with doubled oversampling while the probed error
//! exceeds `validation_factor * eps`.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::cross::oracle::{CachedOracle, EntryOracle};
use crate::error::{invalid, Error, Result};
use crate::htensor::HTensor;
use crate::tree::DimensionTree;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossOptions {
    /// Upper bound on every node rank.
    pub max_rank: usize,
    /// Upper bound on distinct oracle evaluations.
    pub max_evaluations: usize,
    /// Candidate columns kept beyond the detected rank.
    pub oversampling: usize,
    /// Random crosses used to validate the assembled tensor.
    pub probe_crosses: usize,
    /// Accepted ratio between probed error and tolerance.
    pub validation_factor: f64,
    /// Constructions attempted before accepting the last one.
    pub max_rounds: usize,
}

impl Default for CrossOptions {
    fn default() -> Self {
        CrossOptions {
            max_rank: 150,
            max_evaluations: 10_000_000,
            oversampling: 3,
            probe_crosses: 3,
            validation_factor: 1.0,
            max_rounds: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub node: usize,
    pub lo: usize,
    pub hi: usize,
    pub rank: usize,
    pub candidate_rows: usize,
    pub candidate_cols: usize,
    /// Residual left in the candidate block, relative to the block (Frobenius).
    pub residual: f64,
    pub row_pivots: Vec<Vec<usize>>,
    pub col_pivots: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossReport {
    pub nodes: Vec<NodeReport>,
    /// Distinct oracle evaluations, probes included.
    pub evaluations: usize,
    /// Relative Frobenius error over the probe crosses.
    pub probe_error: f64,
    pub rounds: usize,
    /// Every candidate block vanished; the result is the zero tensor.
    pub zero: bool,
}

/// Pivots chosen by complete pivoting on a dense block.
struct BlockCross {
    rows: Vec<usize>,
    cols: Vec<usize>,
    residual: f64,
}

/// Gaussian elimination with complete pivoting, stopped once the residual
/// block is at most `eps` times the block in Frobenius norm. Pivots whose
/// ratio to the first pivot falls below `1e-13` are treated as zero, which
/// keeps the reciprocal condition of the pivot matrix above roughly `1e-12`.
fn complete_pivot_cross(w: &DMatrix<f64>, eps: f64, max_rank: usize) -> Result<BlockCross> {
    let scale = w.norm();
    let mut out = BlockCross {
        rows: Vec::new(),
        cols: Vec::new(),
        residual: 0.0,
    };
    if scale == 0.0 {
        return Ok(out);
    }
    let mut e = w.clone();
    let mut first = 0.0;
    loop {
        let (mut bi, mut bj, mut best) = (0, 0, -1.0);
        for j in 0..e.ncols() {
            for i in 0..e.nrows() {
                let v = e[(i, j)].abs();
                if v > best {
                    (bi, bj, best) = (i, j, v);
                }
            }
        }
        let rest = e.norm();
        if rest <= eps * scale || (first > 0.0 && best < 1e-13 * first) {
            out.residual = rest / scale;
            return Ok(out);
        }
        if out.rows.len() >= max_rank {
            return Err(Error::Budget(format!("node rank would exceed {max_rank}")));
        }
        if first == 0.0 {
            first = best;
        }
        let p = e[(bi, bj)];
        let col = e.column(bj).clone_owned();
        let row = e.row(bi).clone_owned();
        e -= (col / p) * row;
        out.rows.push(bi);
        out.cols.push(bj);
    }
}

/// Distinct random multi-indices over a subset of modes. Draws are
/// stratified: within each run of `n_m` draws every value of mode `m` occurs
/// once, so a few columns already see every slice of each single mode.
struct ColumnSampler {
    modes: Vec<usize>,
    sizes: Vec<usize>,
    perms: Vec<Vec<usize>>,
    generated: usize,
    collisions: usize,
    /// Every index in random order, for small index spaces once stratified
    /// draws keep colliding.
    pool: Option<Vec<Vec<usize>>>,
    pool_next: usize,
    seen: HashSet<Vec<usize>>,
    drawn: Vec<Vec<usize>>,
    total: usize,
}

impl ColumnSampler {
    const ENUMERATE_LIMIT: usize = 4096;
    const MAX_COLLISIONS: usize = 16;

    fn new<R: Rng>(modes: Vec<usize>, all_sizes: &[usize], rng: &mut R) -> Self {
        let sizes: Vec<usize> = modes.iter().map(|&m| all_sizes[m]).collect();
        let total = sizes
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .unwrap_or(usize::MAX);
        let pool = (total <= Self::ENUMERATE_LIMIT).then(|| {
            let mut all = Vec::with_capacity(total);
            let mut idx = vec![0usize; sizes.len()];
            for _ in 0..total {
                all.push(idx.clone());
                crate::htensor::increment(&mut idx, &sizes);
            }
            all.shuffle(rng);
            all
        });
        ColumnSampler {
            modes,
            perms: sizes.iter().map(|&n| (0..n).collect()).collect(),
            sizes,
            generated: 0,
            collisions: 0,
            pool,
            pool_next: 0,
            seen: HashSet::new(),
            drawn: Vec::new(),
            total,
        }
    }

    fn stratified<R: Rng>(&mut self, rng: &mut R) -> Vec<usize> {
        let k = self.generated;
        self.generated += 1;
        self.perms
            .iter_mut()
            .map(|perm| {
                let c = k % perm.len();
                if c == 0 {
                    perm.shuffle(rng);
                }
                perm[c]
            })
            .collect()
    }

    /// Draws until `count` columns exist (or the index space is exhausted).
    fn extend_to<R: Rng>(&mut self, count: usize, rng: &mut R) {
        let count = count.min(self.total);
        while self.drawn.len() < count {
            let next = if self.collisions < Self::MAX_COLLISIONS {
                self.stratified(rng)
            } else if let Some(pool) = &self.pool {
                self.pool_next += 1;
                pool[self.pool_next - 1].clone()
            } else {
                self.sizes.iter().map(|&n| rng.random_range(0..n)).collect()
            };
            if self.seen.insert(next.clone()) {
                self.drawn.push(next);
            } else {
                self.collisions += 1;
            }
        }
    }

    /// Writes column `k` into the complementary modes of `idx`.
    fn fill(&self, k: usize, idx: &mut [usize]) {
        for (&m, &v) in self.modes.iter().zip(&self.drawn[k]) {
            idx[m] = v;
        }
    }
}

struct NodeState {
    /// Pivot rows as full-length indices with only the node's modes meaningful.
    rows: Vec<Vec<usize>>,
    /// `Y(R_t, C_t)`.
    pivot: DMatrix<f64>,
    /// `Y(J_t, C_t)` at leaves, `Y(R_{t1} x R_{t2}, C_t)` at interior nodes.
    selected: DMatrix<f64>,
}

/// Entry `(i, j)` of the node block: row `i` carries the node's modes and
/// column `j` the complement.
fn merge(row: &[usize], col: &[usize], lo: usize, hi: usize) -> Vec<usize> {
    let mut idx = col.to_vec();
    idx[lo..hi].copy_from_slice(&row[lo..hi]);
    idx
}

/// Cross approximation of the tensor behind `oracle` to relative entrywise
/// accuracy `eps`.
pub fn hier_cross<O, R>(
    oracle: &O,
    tree: &DimensionTree,
    eps: f64,
    opts: &CrossOptions,
    rng: &mut R,
) -> Result<(HTensor, CrossReport)>
where
    O: EntryOracle + ?Sized,
    R: Rng,
{
    if !(eps.is_finite() && eps > 0.0) {
        return invalid(format!("tolerance must be positive, got {eps}"));
    }
    let sizes = oracle.mode_sizes();
    if sizes.len() != tree.order() {
        return invalid(format!(
            "oracle has {} modes, tree has {}",
            sizes.len(),
            tree.order()
        ));
    }
    if sizes.contains(&0) {
        return invalid("mode sizes must be positive");
    }
    let cache = CachedOracle::with_budget(oracle, opts.max_evaluations);

    if tree.order() == 1 {
        let col: Vec<f64> = (0..sizes[0]).map(|i| cache.get(&[i])).collect::<Result<_>>()?;
        let zero = col.iter().all(|&v| v == 0.0);
        let ht = HTensor::rank_one(tree.clone(), &[col])?;
        let report = CrossReport {
            nodes: Vec::new(),
            evaluations: cache.evaluations(),
            probe_error: 0.0,
            rounds: 1,
            zero,
        };
        return Ok((ht, report));
    }

    // the errors of the 2d - 2 non-root nodes add up in squares
    let mut node_eps = eps / ((tree.len() - 1) as f64).sqrt();
    let mut oversampling = opts.oversampling.max(1);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let built = build(&cache, tree, &sizes, node_eps, opts, oversampling, rng)?;
        let (ht, nodes, zero) = match built {
            Some((ht, nodes)) => (ht, nodes, false),
            None => (zero_tensor(tree, &sizes)?, Vec::new(), true),
        };
        let probe_error = probe(&cache, &ht, &sizes, opts.probe_crosses, rng)?;
        let accept = zero
            || probe_error <= opts.validation_factor * eps
            || rounds >= opts.max_rounds.max(1);
        if accept {
            if probe_error > opts.validation_factor * eps {
                log::warn!(
                    "cross approximation probe error {probe_error:.3e} exceeds {:.3e} after {rounds} rounds",
                    opts.validation_factor * eps
                );
            }
            let report = CrossReport {
                nodes,
                evaluations: cache.evaluations(),
                probe_error,
                rounds,
                zero,
            };
            return Ok((ht, report));
        }
        oversampling *= 2;
        node_eps /= 4.0;
    }
}

fn zero_tensor(tree: &DimensionTree, sizes: &[usize]) -> Result<HTensor> {
    let vectors: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    HTensor::rank_one(tree.clone(), &vectors)
}

/// One leaves-to-root construction; `None` if some candidate block vanished.
#[allow(clippy::too_many_arguments)]
fn build<O: EntryOracle, R: Rng>(
    cache: &CachedOracle<O>,
    tree: &DimensionTree,
    sizes: &[usize],
    eps: f64,
    opts: &CrossOptions,
    oversampling: usize,
    rng: &mut R,
) -> Result<Option<(HTensor, Vec<NodeReport>)>> {
    let d = tree.order();
    let mut states: Vec<Option<NodeState>> = (0..tree.len()).map(|_| None).collect();
    let mut reports = Vec::new();

    for id in tree.postorder() {
        if id == tree.root() {
            continue;
        }
        let node = tree.node(id);
        let (lo, hi) = (node.lo, node.hi);
        let candidates: Vec<Vec<usize>> = match node.children {
            None => (0..sizes[lo])
                .map(|j| {
                    let mut idx = vec![0usize; d];
                    idx[lo] = j;
                    idx
                })
                .collect(),
            Some((l, r)) => {
                let (sl, sr) = (states[l].as_ref().unwrap(), states[r].as_ref().unwrap());
                let mut out = Vec::with_capacity(sl.rows.len() * sr.rows.len());
                for b in &sr.rows {
                    for a in &sl.rows {
                        let mut idx = a.clone();
                        let rn = tree.node(r);
                        idx[rn.lo..rn.hi].copy_from_slice(&b[rn.lo..rn.hi]);
                        out.push(idx);
                    }
                }
                out
            }
        };
        let guess = match node.children {
            None => 1,
            Some((l, r)) => {
                let (sl, sr) = (states[l].as_ref().unwrap(), states[r].as_ref().unwrap());
                sl.rows.len().max(sr.rows.len())
            }
        };
        let complement: Vec<usize> = (0..d).filter(|&m| m < lo || m >= hi).collect();
        let mut sampler = ColumnSampler::new(complement, sizes, rng);
        let mut want = guess + oversampling;
        let (block, cross) = loop {
            sampler.extend_to(want, rng);
            let k = sampler.drawn.len();
            let mut block = DMatrix::zeros(candidates.len(), k);
            let mut col = vec![0usize; d];
            let mut batch = Vec::with_capacity(candidates.len() * k);
            for j in 0..k {
                sampler.fill(j, &mut col);
                batch.extend(candidates.iter().map(|row| merge(row, &col, lo, hi)));
            }
            cache.prefetch(&batch)?;
            for j in 0..k {
                sampler.fill(j, &mut col);
                for (i, row) in candidates.iter().enumerate() {
                    block[(i, j)] = cache.get(&merge(row, &col, lo, hi))?;
                }
            }
            let cross = complete_pivot_cross(&block, eps, opts.max_rank)?;
            let rank = cross.rows.len();
            if rank + oversampling > k && k < sampler.total {
                want = rank + oversampling;
                continue;
            }
            break (block, cross);
        };
        if cross.rows.is_empty() {
            return Ok(None);
        }
        let rank = cross.rows.len();
        let pivot = DMatrix::from_fn(rank, rank, |a, b| block[(cross.rows[a], cross.cols[b])]);
        let selected = DMatrix::from_fn(block.nrows(), rank, |i, b| block[(i, cross.cols[b])]);
        let cols: Vec<Vec<usize>> = cross
            .cols
            .iter()
            .map(|&j| {
                let mut idx = vec![0usize; d];
                sampler.fill(j, &mut idx);
                idx
            })
            .collect();
        let rows: Vec<Vec<usize>> = cross.rows.iter().map(|&i| candidates[i].clone()).collect();
        reports.push(NodeReport {
            node: id,
            lo,
            hi,
            rank,
            candidate_rows: block.nrows(),
            candidate_cols: block.ncols(),
            residual: cross.residual,
            row_pivots: rows.iter().map(|r| r[lo..hi].to_vec()).collect(),
            col_pivots: cols
                .iter()
                .map(|c| (0..d).filter(|&m| m < lo || m >= hi).map(|m| c[m]).collect())
                .collect(),
        });
        states[id] = Some(NodeState {
            rows,
            pivot,
            selected,
        });
    }

    let (l, r) = tree.node(tree.root()).children.unwrap();
    let root_block = {
        let (sl, sr) = (states[l].as_ref().unwrap(), states[r].as_ref().unwrap());
        let rn = tree.node(r);
        let mut v = DMatrix::zeros(sl.rows.len() * sr.rows.len(), 1);
        for (b, rb) in sr.rows.iter().enumerate() {
            for (a, ra) in sl.rows.iter().enumerate() {
                let mut idx = ra.clone();
                idx[rn.lo..rn.hi].copy_from_slice(&rb[rn.lo..rn.hi]);
                v[(a + sl.rows.len() * b, 0)] = cache.get(&idx)?;
            }
        }
        v
    };

    let mut inverses: Vec<Option<DMatrix<f64>>> = vec![None; tree.len()];
    for (id, state) in states.iter().enumerate() {
        if let Some(s) = state {
            let inv = s.pivot.clone().full_piv_lu().try_inverse().ok_or_else(|| {
                Error::PivotDegeneracy {
                    node: id,
                    detail: "pivot matrix is singular".into(),
                }
            })?;
            inverses[id] = Some(inv);
        }
    }

    let mut frames = vec![None; tree.len()];
    let mut transfers = vec![None; tree.len()];
    for (id, node) in tree.nodes().iter().enumerate() {
        match node.children {
            None => frames[id] = Some(states[id].as_ref().unwrap().selected.clone()),
            Some((a, b)) => {
                let w = if id == tree.root() {
                    &root_block
                } else {
                    &states[id].as_ref().unwrap().selected
                };
                let (ia, ib) = (inverses[a].as_ref().unwrap(), inverses[b].as_ref().unwrap());
                transfers[id] = Some(apply_inverses(w, ia, ib));
            }
        }
    }
    let ht = HTensor::new(tree.clone(), sizes.to_vec(), frames, transfers)?;
    Ok(Some((ht, reports)))
}

/// Column `s` of the result is `vec(A^{-1} W_s B^{-T})` with `W_s` the
/// `r1 x r2` reshaping of column `s` of `w`.
fn apply_inverses(w: &DMatrix<f64>, ia: &DMatrix<f64>, ib: &DMatrix<f64>) -> DMatrix<f64> {
    let (r1, r2) = (ia.nrows(), ib.nrows());
    let mut out = DMatrix::zeros(r1 * r2, w.ncols());
    for s in 0..w.ncols() {
        let ws = DMatrix::from_column_slice(r1, r2, w.column(s).as_slice());
        let bs = ia * ws * ib.transpose();
        out.column_mut(s).copy_from_slice(bs.as_slice());
    }
    out
}

/// Relative error `|X - X~| / |X|` over the entries of random crosses.
fn probe<O: EntryOracle, R: Rng>(
    cache: &CachedOracle<O>,
    ht: &HTensor,
    sizes: &[usize],
    crosses: usize,
    rng: &mut R,
) -> Result<f64> {
    let (mut err, mut total) = (0.0, 0.0);
    for _ in 0..crosses {
        let center: Vec<usize> = sizes.iter().map(|&n| rng.random_range(0..n)).collect();
        let mut batch = Vec::new();
        for m in 0..sizes.len() {
            let mut idx = center.clone();
            for k in 0..sizes[m] {
                idx[m] = k;
                batch.push(idx.clone());
            }
        }
        cache.prefetch(&batch)?;
        for idx in &batch {
            let v = cache.get(idx)?;
            err += (v - ht.entry_unchecked(idx)).powi(2);
            total += v * v;
        }
    }
    Ok(if total > 0.0 { (err / total).sqrt() } else { err.sqrt() })
}
