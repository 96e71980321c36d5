//! Compressed sparse row storage for symmetric operators (both triangles kept).

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Operator with a given pattern and zero values. Columns within a row
    /// must be sorted.
    pub fn with_pattern(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, symmetric: bool) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        let nnz = col_idx.len();
        SparseOperator {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
            symmetric,
        }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 || i == j {
                    col_idx.push(j);
                    values.push(a[(i, j)]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let symmetric = a == &a.transpose();
        SparseOperator {
            n,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(column, storage position)` pairs of row `i`.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], p))
    }

    /// Storage position of entry `(i, j)`, if it is in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row_entries(i).map(|(j, p)| self.values[p] * x[j]).sum())
            .collect()
    }

    /// Largest `|A_ij - A_ji|` over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for (j, p) in self.row_entries(i) {
                worst = worst.max((self.values[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, p) in self.row_entries(i) {
                a[(i, j)] = self.values[p];
            }
        }
        a
    }
}
