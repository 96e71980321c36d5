//! Hierarchical (Tucker) tensor format.
//!
//! A tensor of order `d` is stored as one frame matrix `U_t` per leaf and one
//! transfer tensor `B_t` per interior node. A transfer tensor is kept as a
//! `(r1 * r2) x r` matrix whose row `s1 + r1 * s2` multiplies the column pair
//! `(U_{t1})_{., s1}`, `(U_{t2})_{., s2}`. Implicit interior frames use the
//! column-major layout of the node's modes (first mode fastest), so
//! `(U_t)_{., s}` reshaped to `n1 x n2` equals `U_{t1} B_s U_{t2}^T`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tree::{DimensionTree, TreeShape};

/// Default cap on the number of entries produced by [`HTensor::full`].
pub const DEFAULT_DENSE_CAP: usize = 1_000_000;

/// Dense tensor in column-major order (mode 0 varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return invalid("dense tensor needs a non-empty shape without zero sizes");
        }
        if len != data.len() {
            return invalid(format!("shape holds {len} entries, data has {}", data.len()));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let mut lin = 0;
        let mut stride = 1;
        for (&j, &n) in idx.iter().zip(&self.shape) {
            lin += j * stride;
            stride *= n;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matricization with rows over the contiguous modes `lo..hi`.
    pub fn matricize(&self, lo: usize, hi: usize) -> DMatrix<f64> {
        let before: usize = self.shape[..lo].iter().product();
        let rows: usize = self.shape[lo..hi].iter().product();
        let after: usize = self.shape[hi..].iter().product();
        DMatrix::from_fn(rows, before * after, |r, c| {
            let (b, a) = (c % before, c / before);
            self.data[b + before * (r + rows * a)]
        })
    }
}

/// Advances a column-major multi-index; wraps to zero after the last entry.
pub fn increment(idx: &mut [usize], shape: &[usize]) {
    for (j, &n) in idx.iter_mut().zip(shape) {
        *j += 1;
        if *j < n {
            return;
        }
        *j = 0;
    }
}

/// Storage and rank summary of an [`HTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankStats {
    /// Scalars actually stored: leaf frames plus transfer tensors.
    pub storage_scalars: usize,
    /// Storage with every leaf frame counted at the largest mode size `n`;
    /// this is the quantity `(d-1) r^3 + d r n` is matched against.
    pub normalized_storage: usize,
    pub r_max: usize,
    pub r_eff: f64,
}

/// Result of contracting some modes of an [`HTensor`] with weight vectors.
#[derive(Debug, Clone)]
pub enum Contraction {
    /// Contracted modes are kept with size 1.
    Tensor(HTensor),
    /// Exactly one mode was left free.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HTensor {
    tree: DimensionTree,
    mode_sizes: Vec<usize>,
    ranks: Vec<usize>,
    frames: Vec<Option<DMatrix<f64>>>,
    transfers: Vec<Option<DMatrix<f64>>>,
}

impl HTensor {
    /// Assembles a tensor from per-node parts. `frames[t]` must be set exactly
    /// for leaves and `transfers[t]` exactly for interior nodes.
    pub fn new(
        tree: DimensionTree,
        mode_sizes: Vec<usize>,
        frames: Vec<Option<DMatrix<f64>>>,
        transfers: Vec<Option<DMatrix<f64>>>,
    ) -> Result<Self> {
        let d = tree.order();
        if mode_sizes.len() != d || mode_sizes.contains(&0) {
            return invalid("mode sizes must be positive and match the tree order");
        }
        if frames.len() != tree.len() || transfers.len() != tree.len() {
            return invalid("one frame/transfer slot per tree node is required");
        }
        let mut ranks = vec![0usize; tree.len()];
        for id in tree.postorder() {
            let node = tree.node(id);
            match node.children {
                None => {
                    let u = frames[id]
                        .as_ref()
                        .ok_or_else(|| Error::InvalidArgument(format!("leaf {id} lacks a frame")))?;
                    if transfers[id].is_some() {
                        return invalid(format!("leaf {id} carries a transfer tensor"));
                    }
                    if u.nrows() != mode_sizes[node.lo] || u.ncols() == 0 {
                        return invalid(format!(
                            "leaf {id} frame is {}x{}, expected {} rows",
                            u.nrows(),
                            u.ncols(),
                            mode_sizes[node.lo]
                        ));
                    }
                    ranks[id] = u.ncols();
                }
                Some((l, r)) => {
                    let b = transfers[id].as_ref().ok_or_else(|| {
                        Error::InvalidArgument(format!("interior node {id} lacks a transfer tensor"))
                    })?;
                    if frames[id].is_some() {
                        return invalid(format!("interior node {id} carries a frame"));
                    }
                    if b.nrows() != ranks[l] * ranks[r] || b.ncols() == 0 {
                        return invalid(format!(
                            "transfer at node {id} is {}x{}, expected {} rows",
                            b.nrows(),
                            b.ncols(),
                            ranks[l] * ranks[r]
                        ));
                    }
                    ranks[id] = b.ncols();
                }
            }
        }
        if ranks[0] != 1 {
            return invalid(format!("root rank must be 1, got {}", ranks[0]));
        }
        Ok(HTensor {
            tree,
            mode_sizes,
            ranks,
            frames,
            transfers,
        })
    }

    /// Rank-1 tensor `v_1 ⊗ ... ⊗ v_d`.
    pub fn rank_one(tree: DimensionTree, vectors: &[Vec<f64>]) -> Result<Self> {
        if vectors.len() != tree.order() {
            return invalid("one vector per mode is required");
        }
        let mut frames = vec![None; tree.len()];
        let mut transfers = vec![None; tree.len()];
        for (id, node) in tree.nodes().iter().enumerate() {
            if node.is_leaf() {
                frames[id] = Some(DMatrix::from_column_slice(
                    vectors[node.lo].len(),
                    1,
                    &vectors[node.lo],
                ));
            } else {
                transfers[id] = Some(DMatrix::from_element(1, 1, 1.0));
            }
        }
        let sizes = vectors.iter().map(Vec::len).collect();
        Self::new(tree, sizes, frames, transfers)
    }

    pub fn tree(&self) -> &DimensionTree {
        &self.tree
    }

    pub fn order(&self) -> usize {
        self.tree.order()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn rank(&self, node: usize) -> usize {
        self.ranks[node]
    }

    pub fn frame(&self, node: usize) -> Option<&DMatrix<f64>> {
        self.frames[node].as_ref()
    }

    pub fn transfer(&self, node: usize) -> Option<&DMatrix<f64>> {
        self.transfers[node].as_ref()
    }

    pub fn len(&self) -> usize {
        self.mode_sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_index(&self, idx: &[usize]) -> Result<()> {
        if idx.len() != self.order() {
            return invalid(format!("index has {} components, tensor order is {}", idx.len(), self.order()));
        }
        for (m, (&j, &n)) in idx.iter().zip(&self.mode_sizes).enumerate() {
            if j >= n {
                return invalid(format!("index {j} out of range for mode {m} of size {n}"));
            }
        }
        Ok(())
    }

    pub fn entry(&self, idx: &[usize]) -> Result<f64> {
        self.check_index(idx)?;
        Ok(self.entry_unchecked(idx))
    }

    /// Entry without bounds validation; panics on out-of-range indices.
    pub fn entry_unchecked(&self, idx: &[usize]) -> f64 {
        let row = self.node_row(0, idx);
        row[0]
    }

    fn node_row(&self, id: usize, idx: &[usize]) -> Vec<f64> {
        let node = self.tree.node(id);
        match node.children {
            None => {
                let u = self.frames[id].as_ref().unwrap();
                u.row(idx[node.lo]).iter().copied().collect()
            }
            Some((l, r)) => {
                let a = self.node_row(l, idx);
                let b = self.node_row(r, idx);
                let bt = self.transfers[id].as_ref().unwrap();
                let r1 = a.len();
                let mut out = vec![0.0; bt.ncols()];
                for (s, o) in out.iter_mut().enumerate() {
                    let col = bt.column(s);
                    let mut acc = 0.0;
                    for (s2, &bv) in b.iter().enumerate() {
                        if bv == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for (s1, &av) in a.iter().enumerate() {
                            inner += col[s1 + r1 * s2] * av;
                        }
                        acc += inner * bv;
                    }
                    *o = acc;
                }
                out
            }
        }
    }

    /// Dense frame `U_t` of a node (rows in column-major order over its modes).
    pub fn node_frame(&self, id: usize) -> DMatrix<f64> {
        let node = self.tree.node(id);
        match node.children {
            None => self.frames[id].clone().unwrap(),
            Some((l, r)) => {
                let u1 = self.node_frame(l);
                let u2 = self.node_frame(r);
                combine_frames(&u1, &u2, self.transfers[id].as_ref().unwrap())
            }
        }
    }

    pub fn full_with_cap(&self, cap: usize) -> Result<DenseTensor> {
        let len = self.len();
        if len > cap {
            return Err(Error::ResourceLimit(format!(
                "dense tensor would hold {len} entries (cap {cap})"
            )));
        }
        let root = self.node_frame(0);
        DenseTensor::new(self.mode_sizes.clone(), root.column(0).iter().copied().collect())
    }

    pub fn full(&self) -> Result<DenseTensor> {
        self.full_with_cap(DEFAULT_DENSE_CAP)
    }

    /// Truncated root-to-leaves SVD of every matricization. The rank at node
    /// `t` is the smallest `r` whose discarded singular values have energy at
    /// most `(tol * ||T||)^2`.
    pub fn from_dense(dense: &DenseTensor, tree: DimensionTree, tol: f64) -> Result<Self> {
        let d = tree.order();
        if dense.shape().len() != d {
            return invalid("dense tensor order does not match the tree");
        }
        if dense.len() > DEFAULT_DENSE_CAP {
            return Err(Error::ResourceLimit(format!(
                "dense tensor holds {} entries (cap {DEFAULT_DENSE_CAP})",
                dense.len()
            )));
        }
        let sizes = dense.shape().to_vec();
        let total = dense.frobenius_norm();
        if total == 0.0 {
            let vectors: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
            return Self::rank_one(tree, &vectors);
        }
        if d == 1 {
            let mut frames = vec![None];
            frames[0] = Some(DMatrix::from_column_slice(sizes[0], 1, dense.data()));
            return Self::new(tree, sizes, frames, vec![None]);
        }
        let threshold = tol.max(0.0) * total;
        let mut bases: Vec<Option<DMatrix<f64>>> = vec![None; tree.len()];
        for id in 1..tree.len() {
            let node = tree.node(id);
            let m = dense.matricize(node.lo, node.hi);
            bases[id] = Some(truncated_left_basis(m, threshold));
        }
        let mut frames = vec![None; tree.len()];
        let mut transfers = vec![None; tree.len()];
        for id in 0..tree.len() {
            let node = tree.node(id);
            match node.children {
                None => frames[id] = bases[id].clone(),
                Some((l, r)) => {
                    let u1 = bases[l].as_ref().unwrap();
                    let u2 = bases[r].as_ref().unwrap();
                    let n1 = u1.nrows();
                    let n2 = u2.nrows();
                    let target = if id == 0 {
                        DMatrix::from_column_slice(dense.len(), 1, dense.data())
                    } else {
                        bases[id].clone().unwrap()
                    };
                    let (r1, r2) = (u1.ncols(), u2.ncols());
                    let mut b = DMatrix::zeros(r1 * r2, target.ncols());
                    for s in 0..target.ncols() {
                        let col = DMatrix::from_column_slice(n1, n2, target.column(s).as_slice());
                        let proj = u1.transpose() * col * u2;
                        for s2 in 0..r2 {
                            for s1 in 0..r1 {
                                b[(s1 + r1 * s2, s)] = proj[(s1, s2)];
                            }
                        }
                    }
                    transfers[id] = Some(b);
                }
            }
        }
        Self::new(tree, sizes, frames, transfers)
    }

    /// Gram matrices `U_t^T U_t` for every node, computed bottom-up.
    pub fn gram_matrices(&self) -> Vec<DMatrix<f64>> {
        let mut grams: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); self.tree.len()];
        for id in self.tree.postorder() {
            let node = self.tree.node(id);
            grams[id] = match node.children {
                None => {
                    let u = self.frames[id].as_ref().unwrap();
                    u.transpose() * u
                }
                Some((l, r)) => transfer_gram(
                    self.transfers[id].as_ref().unwrap(),
                    &grams[l],
                    &grams[r],
                ),
            };
        }
        grams
    }

    /// Frobenius norm via Gram recursion over the tree.
    pub fn norm(&self) -> f64 {
        let grams = self.gram_matrices();
        grams[0][(0, 0)].max(0.0).sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> HTensor {
        let mut out = self.clone();
        match out.tree.node(0).children {
            Some(_) => {
                if let Some(b) = out.transfers[0].as_mut() {
                    *b *= alpha;
                }
            }
            None => {
                if let Some(u) = out.frames[0].as_mut() {
                    *u *= alpha;
                }
            }
        }
        out
    }

    /// Returns a copy whose leaf frame for `mode` is replaced.
    pub fn with_leaf_frame(&self, mode: usize, frame: DMatrix<f64>) -> Result<HTensor> {
        if mode >= self.order() {
            return invalid(format!("mode {mode} out of range"));
        }
        let leaf = self.tree.leaf_of_mode(mode);
        if frame.ncols() != self.ranks[leaf] {
            return invalid(format!(
                "replacement frame has {} columns, leaf rank is {}",
                frame.ncols(),
                self.ranks[leaf]
            ));
        }
        let mut frames = self.frames.clone();
        let mut sizes = self.mode_sizes.clone();
        sizes[mode] = frame.nrows();
        frames[leaf] = Some(frame);
        HTensor::new(self.tree.clone(), sizes, frames, self.transfers.clone())
    }

    /// Contracts the listed modes with weight vectors. Contracted modes keep
    /// size 1; when exactly one mode stays free the dense fiber is returned.
    pub fn contract_modes(&self, weights: &[(usize, &[f64])]) -> Result<Contraction> {
        let mut contracted = vec![false; self.order()];
        let mut frames = self.frames.clone();
        let mut sizes = self.mode_sizes.clone();
        for &(mode, w) in weights {
            if mode >= self.order() {
                return invalid(format!("mode {mode} out of range"));
            }
            if contracted[mode] {
                return invalid(format!("mode {mode} listed twice"));
            }
            if w.len() != self.mode_sizes[mode] {
                return invalid(format!(
                    "weight vector for mode {mode} has length {}, mode size is {}",
                    w.len(),
                    self.mode_sizes[mode]
                ));
            }
            contracted[mode] = true;
            let leaf = self.tree.leaf_of_mode(mode);
            let u = self.frames[leaf].as_ref().unwrap();
            let row = DMatrix::from_row_slice(1, u.nrows(), w) * u;
            frames[leaf] = Some(row);
            sizes[mode] = 1;
        }
        let out = HTensor::new(self.tree.clone(), sizes, frames, self.transfers.clone())?;
        if contracted.iter().filter(|c| !**c).count() == 1 {
            let root = out.node_frame(0);
            Ok(Contraction::Vector(root.column(0).iter().copied().collect()))
        } else {
            Ok(Contraction::Tensor(out))
        }
    }

    /// Contracts every mode except `free`, returning the dense fiber.
    pub fn contract_all_but(&self, free: usize, weights: &[Vec<f64>]) -> Result<Vec<f64>> {
        let list: Vec<(usize, &[f64])> = weights
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != free)
            .map(|(m, w)| (m, w.as_slice()))
            .collect();
        if list.len() + 1 != self.order() {
            return invalid("need a weight vector for every mode except the free one");
        }
        match self.contract_modes(&list)? {
            Contraction::Vector(v) => Ok(v),
            Contraction::Tensor(_) => unreachable!("exactly one free mode"),
        }
    }

    pub fn rank_stats(&self) -> RankStats {
        let d = self.order();
        let n = *self.mode_sizes.iter().max().unwrap();
        let mut storage = 0usize;
        let mut normalized = 0usize;
        for (id, node) in self.tree.nodes().iter().enumerate() {
            match node.children {
                None => {
                    storage += self.mode_sizes[node.lo] * self.ranks[id];
                    normalized += n * self.ranks[id];
                }
                Some((l, r)) => {
                    let c = self.ranks[id] * self.ranks[l] * self.ranks[r];
                    storage += c;
                    normalized += c;
                }
            }
        }
        let r_max = *self.ranks.iter().max().unwrap();
        RankStats {
            storage_scalars: storage,
            normalized_storage: normalized,
            r_max,
            r_eff: effective_rank(d, n, normalized, r_max),
        }
    }

    pub fn to_file_repr(&self) -> HTensorFile {
        let pack = |m: &Option<DMatrix<f64>>| {
            m.as_ref().map(|m| MatrixData {
                rows: m.nrows(),
                cols: m.ncols(),
                data: m.as_slice().to_vec(),
            })
        };
        HTensorFile {
            format: HTENSOR_FORMAT.to_string(),
            order: self.order(),
            shape: self.tree.shape(),
            mode_sizes: self.mode_sizes.clone(),
            ranks: self.ranks.clone(),
            frames: self.frames.iter().map(pack).collect(),
            transfers: self.transfers.iter().map(pack).collect(),
        }
    }

    pub fn from_file_repr(file: HTensorFile) -> Result<Self> {
        if file.format != HTENSOR_FORMAT {
            return invalid(format!("unsupported tensor format `{}`", file.format));
        }
        let tree = DimensionTree::new(file.order, file.shape)?;
        let unpack = |m: Option<MatrixData>| -> Result<Option<DMatrix<f64>>> {
            match m {
                None => Ok(None),
                Some(m) if m.rows * m.cols == m.data.len() => {
                    Ok(Some(DMatrix::from_vec(m.rows, m.cols, m.data)))
                }
                Some(_) => invalid("matrix payload does not match its dimensions"),
            }
        };
        let frames = file.frames.into_iter().map(unpack).collect::<Result<Vec<_>>>()?;
        let transfers = file.transfers.into_iter().map(unpack).collect::<Result<Vec<_>>>()?;
        let t = HTensor::new(tree, file.mode_sizes, frames, transfers)?;
        if t.ranks != file.ranks {
            return invalid("stored ranks disagree with the stored frames");
        }
        Ok(t)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &self.to_file_repr())?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_file_repr(serde_json::from_reader(f)?)
    }
}

const HTENSOR_FORMAT: &str = "htensor-v1";

/// Self-describing JSON layout of an [`HTensor`]; matrices are column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTensorFile {
    pub format: String,
    pub order: usize,
    pub shape: TreeShape,
    pub mode_sizes: Vec<usize>,
    pub ranks: Vec<usize>,
    pub frames: Vec<Option<MatrixData>>,
    pub transfers: Vec<Option<MatrixData>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// `U_t = (U_2 ⊗ U_1) B` with column `s` computed as `vec(U_1 B_s U_2^T)`.
pub(crate) fn combine_frames(u1: &DMatrix<f64>, u2: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, r1) = u1.shape();
    let (n2, r2) = u2.shape();
    let mut out = DMatrix::zeros(n1 * n2, b.ncols());
    for s in 0..b.ncols() {
        let bs = DMatrix::from_column_slice(r1, r2, b.column(s).as_slice());
        let block = (u1 * bs) * u2.transpose();
        out.column_mut(s).copy_from_slice(block.as_slice());
    }
    out
}

/// `B^T (G_2 ⊗ G_1) B`, evaluated blockwise.
fn transfer_gram(b: &DMatrix<f64>, g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> DMatrix<f64> {
    let r1 = g1.nrows();
    let r2 = g2.nrows();
    let r = b.ncols();
    let blocks: Vec<DMatrix<f64>> = (0..r)
        .map(|s| DMatrix::from_column_slice(r1, r2, b.column(s).as_slice()))
        .collect();
    let mut g = DMatrix::zeros(r, r);
    for sp in 0..r {
        let t = g1 * &blocks[sp] * g2;
        for s in 0..=sp {
            let v = blocks[s].dot(&t);
            g[(s, sp)] = v;
            g[(sp, s)] = v;
        }
    }
    g
}

fn truncated_left_basis(m: DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    // tail[k] is the energy of sv[k..], summed from the small end.
    let mut tail = vec![0.0; sv.len() + 1];
    for k in (0..sv.len()).rev() {
        tail[k] = tail[k + 1] + sv[k] * sv[k];
    }
    let mut rank = 0;
    while rank < sv.len() && tail[rank] > threshold * threshold {
        rank += 1;
    }
    let rank = rank.clamp(1, sv.len().max(1));
    let mut basis = DMatrix::zeros(rows, rank);
    for (k, &i) in order.iter().take(rank).enumerate() {
        basis.column_mut(k).copy_from(&u.column(i));
    }
    basis
}

/// Positive root of `(d-1) r^3 + d n r = storage` by bisection on `[0, r_max + n]`.
pub fn effective_rank(d: usize, n: usize, storage: usize, r_max: usize) -> f64 {
    let f = |r: f64| (d as f64 - 1.0) * r * r * r + (d * n) as f64 * r - storage as f64;
    let (mut lo, mut hi) = (0.0_f64, (r_max + n) as f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::random_htensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_all_ones() {
        let tree = DimensionTree::new(3, TreeShape::Balanced).unwrap();
        let t = HTensor::rank_one(tree, &[vec![1.0; 2], vec![1.0; 3], vec![1.0; 4]]).unwrap();
        assert_eq!(t.entry(&[1, 2, 3]).unwrap(), 1.0);
        assert!((t.norm() - 24f64.sqrt()).abs() < 1e-12);
        assert!(t.entry(&[2, 0, 0]).is_err());
    }

    #[test]
    fn scalar_tensor_densifies() {
        let tree = DimensionTree::new(3, TreeShape::Linear).unwrap();
        let t = HTensor::rank_one(tree, &[vec![2.5], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(t.full().unwrap().data(), &[2.5]);
    }

    #[test]
    fn rank_one_outer_product() {
        let tree = DimensionTree::new(3, TreeShape::Balanced).unwrap();
        let (a, b, c) = (vec![1.0, -2.0], vec![0.5, 3.0, 1.0], vec![2.0, -1.0]);
        let t = HTensor::rank_one(tree, &[a.clone(), b.clone(), c.clone()]).unwrap();
        let dense = t.full().unwrap();
        for k in 0..2 {
            for j in 0..3 {
                for i in 0..2 {
                    assert!((dense.get(&[i, j, k]) - a[i] * b[j] * c[k]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let tree = DimensionTree::new(2, TreeShape::Balanced).unwrap();
        let t = HTensor::rank_one(tree, &[vec![1.0; 2000], vec![1.0; 2000]]).unwrap();
        assert!(matches!(t.full(), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn random_entries_agree_with_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_htensor(&mut rng, &[3, 3, 3, 3], 2, TreeShape::Balanced);
        let dense = t.full().unwrap();
        for _ in 0..100 {
            let idx: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let e = t.entry(&idx).unwrap();
            assert!((e - dense.get(&idx)).abs() <= 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn from_dense_round_trip_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = DenseTensor::from_fn(vec![2, 2, 2], |_| rng.random_range(-1.0..1.0)).unwrap();
        let tree = DimensionTree::new(3, TreeShape::Balanced).unwrap();
        let t = HTensor::from_dense(&dense, tree, 1e-13).unwrap();
        let back = t.full().unwrap();
        for (a, b) in dense.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3));
        }
    }

    #[test]
    fn from_dense_rank_one_and_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut vecs = || -> Vec<Vec<f64>> {
            (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let (v, w) = (vecs(), vecs());
        let one = DenseTensor::from_fn(vec![4, 4, 4], |i| v[0][i[0]] * v[1][i[1]] * v[2][i[2]]).unwrap();
        let tree = DimensionTree::new(3, TreeShape::Balanced).unwrap();
        let t = HTensor::from_dense(&one, tree.clone(), 1e-12).unwrap();
        assert!(t.ranks().iter().all(|&r| r == 1));
        let two = DenseTensor::from_fn(vec![4, 4, 4], |i| {
            v[0][i[0]] * v[1][i[1]] * v[2][i[2]] + w[0][i[0]] * w[1][i[1]] * w[2][i[2]]
        })
        .unwrap();
        let t = HTensor::from_dense(&two, tree, 1e-12).unwrap();
        assert!(t.ranks().iter().all(|&r| r <= 2));
    }

    #[test]
    fn zero_tensor_from_dense() {
        let z = DenseTensor::zeros(vec![3, 2, 2]).unwrap();
        let t = HTensor::from_dense(&z, DimensionTree::new(3, TreeShape::Balanced).unwrap(), 1e-8).unwrap();
        assert!(t.ranks().iter().all(|&r| r == 1));
        assert_eq!(t.norm(), 0.0);
    }

    #[test]
    fn norm_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_htensor(&mut rng, &[3, 4, 2], 2, TreeShape::Linear);
        let n = t.norm();
        assert!((t.scaled(-2.5).norm() - 2.5 * n).abs() <= 1e-12 * n);
    }

    #[test]
    fn contraction_rank_one() {
        let tree = DimensionTree::new(3, TreeShape::Balanced).unwrap();
        let (a, b, c) = (vec![1.0, 2.0], vec![3.0, -1.0, 0.5], vec![1.0, 4.0, -2.0, 0.0]);
        let t = HTensor::rank_one(tree, &[a.clone(), b.clone(), c.clone()]).unwrap();
        let (u, v) = ([0.5, -1.0], [1.0, 1.0, 2.0]);
        let out = t.contract_all_but(2, &[u.to_vec(), v.to_vec(), vec![]]).unwrap();
        let ua: f64 = u.iter().zip(&a).map(|(x, y)| x * y).sum();
        let vb: f64 = v.iter().zip(&b).map(|(x, y)| x * y).sum();
        for (o, ci) in out.iter().zip(&c) {
            assert!((o - ua * vb * ci).abs() < 1e-14);
        }
    }

    #[test]
    fn contraction_length_mismatch() {
        let tree = DimensionTree::new(2, TreeShape::Balanced).unwrap();
        let t = HTensor::rank_one(tree, &[vec![1.0; 3], vec![1.0; 2]]).unwrap();
        assert!(t.contract_modes(&[(0, &[1.0, 2.0])]).is_err());
        assert!(t.contract_modes(&[(0, &[1.0; 3]), (0, &[1.0; 3])]).is_err());
    }

    #[test]
    fn rank_stats_all_ones_table_row() {
        let tree = DimensionTree::new(11, TreeShape::Balanced).unwrap();
        let mut vectors = vec![vec![1.0]; 10];
        vectors.push(vec![1.0; 263169]);
        let t = HTensor::rank_one(tree, &vectors).unwrap();
        let s = t.rank_stats();
        assert_eq!(s.r_max, 1);
        assert!((s.r_eff - 1.0).abs() < 1e-6);
        assert_eq!(s.storage_scalars, 10 + 263169 + 10);
        assert!(s.storage_scalars >= 11);
    }

    #[test]
    fn rank_stats_matrix_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200;
        let r = 3;
        let tree = DimensionTree::new(2, TreeShape::Balanced).unwrap();
        let frames = vec![
            None,
            Some(DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0))),
            Some(DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0))),
        ];
        let transfers = vec![Some(DMatrix::from_fn(r * r, 1, |_, _| 1.0)), None, None];
        let t = HTensor::new(tree, vec![n, n], frames, transfers).unwrap();
        let s = t.rank_stats();
        assert_eq!(s.storage_scalars, 2 * n * r + r * r);
        assert!((s.r_eff - r as f64).abs() < 0.05);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_htensor(&mut rng, &[3, 2, 4, 3, 2], 3, TreeShape::Balanced);
        let text = serde_json::to_string(&t.to_file_repr()).unwrap();
        let back = HTensor::from_file_repr(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(t, back);
    }
}
