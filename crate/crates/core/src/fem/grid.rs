//! Nested uniform grids on the unit square.
//!
//! Level `l` has `m = 4 * 2^l + 1` nodes per side and mesh size
//! `h = 2^-l / 4`. Node `(i, j)` at `(i h, j h)` has index `i + m j`.

use crate::error::{invalid, Result};

pub const MAX_LEVEL: usize = 12;

/// Gauss points of the two-point rule on `[0, 1]`.
pub const GAUSS_01: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9,
    0.5 + 0.288_675_134_594_812_9,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLevel {
    level: usize,
    m: usize,
}

pub fn nodes_per_side(level: usize) -> usize {
    4 * (1usize << level) + 1
}

pub fn build_grid(level: usize) -> Result<GridLevel> {
    if level > MAX_LEVEL {
        return invalid(format!("grid level {level} exceeds {MAX_LEVEL}"));
    }
    Ok(GridLevel {
        level,
        m: nodes_per_side(level),
    })
}

impl GridLevel {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn nodes_per_side(&self) -> usize {
        self.m
    }

    pub fn node_count(&self) -> usize {
        self.m * self.m
    }

    pub fn mesh_size(&self) -> f64 {
        1.0 / (self.m - 1) as f64
    }

    pub fn elements_per_side(&self) -> usize {
        self.m - 1
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.m * j
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let h = self.mesh_size();
        [(k % self.m) as f64 * h, (k / self.m) as f64 * h]
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = (k % self.m, k / self.m);
        i == 0 || j == 0 || i == self.m - 1 || j == self.m - 1
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|k| self.is_boundary(k)).collect()
    }

    /// Nodes of element `(ex, ey)` in the order `(0,0), (1,0), (0,1), (1,1)`.
    pub fn element_nodes(&self, ex: usize, ey: usize) -> [usize; 4] {
        let k = self.index(ex, ey);
        [k, k + 1, k + self.m, k + self.m + 1]
    }

    /// One-dimensional Gauss coordinates; element `e` owns entries `2e` and `2e + 1`.
    pub fn quadrature_coords(&self) -> Vec<f64> {
        let h = self.mesh_size();
        (0..self.elements_per_side())
            .flat_map(|e| GAUSS_01.map(|g| (e as f64 + g) * h))
            .collect()
    }
}

/// Bilinear embedding of a level `l - 1` nodal vector into level `l`.
pub fn prolongate(v: &[f64], level: usize) -> Result<Vec<f64>> {
    if level == 0 || level > MAX_LEVEL {
        return invalid(format!("cannot prolongate to level {level}"));
    }
    let mc = nodes_per_side(level - 1);
    if v.len() != mc * mc {
        return invalid(format!(
            "coarse vector has length {}, expected {}",
            v.len(),
            mc * mc
        ));
    }
    let mf = nodes_per_side(level);
    let mut out = vec![0.0; mf * mf];
    let c = |i: usize, j: usize| v[i + mc * j];
    for jf in 0..mf {
        for i_f in 0..mf {
            let (i, j) = (i_f / 2, jf / 2);
            out[i_f + mf * jf] = match (i_f % 2, jf % 2) {
                (0, 0) => c(i, j),
                (1, 0) => 0.5 * (c(i, j) + c(i + 1, j)),
                (0, 1) => 0.5 * (c(i, j) + c(i, j + 1)),
                _ => 0.25 * (c(i, j) + c(i + 1, j) + c(i, j + 1) + c(i + 1, j + 1)),
            };
        }
    }
    Ok(out)
}

/// Writes a nodal vector as `m` lines of `m` values; line `j` holds the
/// nodes with `y = j h`.
pub fn write_grid_text<W: std::io::Write>(mut out: W, v: &[f64]) -> Result<()> {
    let m = (v.len() as f64).sqrt().round() as usize;
    if m * m != v.len() {
        return invalid("vector length is not a square");
    }
    for j in 0..m {
        let line: Vec<String> = v[m * j..m * (j + 1)].iter().map(|x| format!("{x:.12e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}
