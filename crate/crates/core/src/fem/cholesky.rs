//! Up-looking sparse Cholesky factorization `P A P^T = L L^T`.
//!
//! The symbolic phase (permutation, elimination tree, column counts) depends
//! only on the sparsity pattern and is shared by every numeric factorization
//! on the same grid.

use crate::error::{Error, Result};
use crate::fem::sparse::SparseOperator;

/// Pattern-only part of the factorization.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    /// `perm[k]` is the original index of the `k`-th pivot.
    perm: Vec<usize>,
    pinv: Vec<usize>,
    /// Upper triangle of `P A P^T` in compressed columns; values are read from
    /// the operator through `c_src`.
    c_ptr: Vec<usize>,
    c_row: Vec<u32>,
    c_src: Vec<usize>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl Symbolic {
    /// Analyses the pattern of `a` (which must store both triangles) under the
    /// pivot order `perm`.
    pub fn new(a: &SparseOperator, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        if perm.len() != n {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let mut pinv = vec![NONE; n];
        for (k, &p) in perm.iter().enumerate() {
            if p >= n || pinv[p] != NONE {
                return Err(Error::InvalidArgument("ordering is not a permutation".into()));
            }
            pinv[p] = k;
        }
        let mut c_ptr = Vec::with_capacity(n + 1);
        let mut c_row = Vec::new();
        let mut c_src = Vec::new();
        c_ptr.push(0);
        let mut col: Vec<(usize, usize)> = Vec::new();
        for &old in &perm {
            col.clear();
            let k = pinv[old];
            for (j, pos) in a.row_entries(old) {
                let i = pinv[j];
                if i <= k {
                    col.push((i, pos));
                }
            }
            col.sort_unstable();
            for &(i, pos) in &col {
                c_row.push(i as u32);
                c_src.push(pos);
            }
            c_ptr.push(c_row.len());
        }

        let parent = etree(n, &c_ptr, &c_row);
        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(k, &c_ptr, &c_row, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut l_ptr = Vec::with_capacity(n + 1);
        l_ptr.push(0);
        for c in &counts {
            l_ptr.push(l_ptr.last().unwrap() + c);
        }
        Ok(Symbolic {
            n,
            perm,
            pinv,
            c_ptr,
            c_row,
            c_src,
            parent,
            l_ptr,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros of `L`, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn pinv(&self) -> &[usize] {
        &self.pinv
    }

    /// Numeric factorization of an operator with the analysed pattern.
    pub fn factor(&self, a: &SparseOperator) -> Result<Factor> {
        let n = self.n;
        let values = a.values();
        let nnz = self.factor_nnz();
        let mut li = vec![0u32; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next: Vec<usize> = self.l_ptr[..n].to_vec();
        let mut x = vec![0.0f64; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(k, &self.c_ptr, &self.c_row, &self.parent, &mut stack, &mut mark);
            x[k] = 0.0;
            for p in self.c_ptr[k]..self.c_ptr[k + 1] {
                x[self.c_row[p] as usize] = values[self.c_src[p]];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[self.l_ptr[i]];
                x[i] = 0.0;
                for p in self.l_ptr[i] + 1..next[i] {
                    x[li[p] as usize] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k as u32;
                lx[p] = lki;
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {d:e} at column {k})"
                )));
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k as u32;
            lx[p] = d.sqrt();
        }
        Ok(Factor { li, lx })
    }

    /// Solves `A x = b` with a factor of `A`.
    pub fn solve(&self, f: &Factor, b: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.lower_solve(f, &mut w);
        self.upper_solve(f, &mut w);
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }

    /// `L^T P c`, whose Euclidean norm squared is `c^T A c`.
    pub fn apply_rt(&self, f: &Factor, c: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self.perm.iter().map(|&p| c[p]).collect();
        (0..self.n)
            .map(|j| {
                (self.l_ptr[j]..self.l_ptr[j + 1])
                    .map(|p| f.lx[p] * w[f.li[p] as usize])
                    .sum()
            })
            .collect()
    }

    /// Inverse of [`Self::apply_rt`].
    pub fn solve_rt(&self, f: &Factor, z: &[f64]) -> Vec<f64> {
        let mut w = z.to_vec();
        self.upper_solve(f, &mut w);
        let mut c = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            c[p] = w[k];
        }
        c
    }

    /// Solves `(L^T P)^T g = m`, i.e. `g = L^{-1} P m`.
    pub fn solve_r_transpose(&self, f: &Factor, m: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> = self.perm.iter().map(|&p| m[p]).collect();
        self.lower_solve(f, &mut w);
        w
    }

    fn lower_solve(&self, f: &Factor, w: &mut [f64]) {
        for j in 0..self.n {
            let p0 = self.l_ptr[j];
            w[j] /= f.lx[p0];
            let wj = w[j];
            for p in p0 + 1..self.l_ptr[j + 1] {
                w[f.li[p] as usize] -= f.lx[p] * wj;
            }
        }
    }

    fn upper_solve(&self, f: &Factor, w: &mut [f64]) {
        for j in (0..self.n).rev() {
            let p0 = self.l_ptr[j];
            let mut s = w[j];
            for p in p0 + 1..self.l_ptr[j + 1] {
                s -= f.lx[p] * w[f.li[p] as usize];
            }
            w[j] = s / f.lx[p0];
        }
    }
}

/// Numeric values of `L`, column-compressed with the diagonal first.
#[derive(Debug, Clone)]
pub struct Factor {
    li: Vec<u32>,
    lx: Vec<f64>,
}

impl Factor {
    pub(crate) fn from_parts(li: Vec<u32>, lx: Vec<f64>) -> Self {
        Factor { li, lx }
    }
}

/// Elimination tree of a matrix given by its upper triangle.
fn etree(n: usize, c_ptr: &[usize], c_row: &[u32]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in c_ptr[k]..c_ptr[k + 1] {
            let mut i = c_row[p] as usize;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row `k` of `L` (excluding the diagonal) in topological order,
/// written to `stack[top..]`; returns `top`.
fn ereach(
    k: usize,
    c_ptr: &[usize],
    c_row: &[u32],
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    for p in c_ptr[k]..c_ptr[k + 1] {
        let mut i = c_row[p] as usize;
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                if rng.random_bool(0.3) {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
        }
        for i in 0..n {
            let s: f64 = a.row(i).iter().map(|v| v.abs()).sum();
            a[(i, i)] = s + 1.0;
        }
        a
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1, 2, 7, 30] {
            let dense = random_spd(n, &mut rng);
            let op = SparseOperator::from_dense(&dense);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            let sym = Symbolic::new(&op, perm).unwrap();
            let f = sym.factor(&op).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = sym.solve(&f, &b);
            let expect = dense.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
            for i in 0..n {
                assert!((x[i] - expect[i]).abs() < 1e-12);
            }
            let c: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
            let z = sym.apply_rt(&f, &c);
            let cv = nalgebra::DVector::from_vec(c.clone());
            let energy = cv.dot(&(&dense * &cv));
            let zn: f64 = z.iter().map(|v| v * v).sum();
            assert!((zn - energy).abs() < 1e-12 * energy);
            let back = sym.solve_rt(&f, &z);
            for i in 0..n {
                assert!((back[i] - c[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_fails() {
        let mut dense = DMatrix::identity(3, 3);
        dense[(1, 1)] = -1.0;
        let op = SparseOperator::from_dense(&dense);
        let sym = Symbolic::new(&op, vec![0, 1, 2]).unwrap();
        assert!(matches!(sym.factor(&op), Err(Error::Numeric(_))));
    }

    #[test]
    fn rejects_bad_permutation() {
        let op = SparseOperator::from_dense(&DMatrix::identity(3, 3));
        assert!(Symbolic::new(&op, vec![0, 0, 1]).is_err());
        assert!(Symbolic::new(&op, vec![0, 1]).is_err());
    }
}
