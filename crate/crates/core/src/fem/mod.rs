//! Q1 finite elements for `-div(a grad u) = 1` on the unit square with zero
//! Dirichlet data.
//!
//! Vectors carry all grid nodes; boundary rows and columns of every operator
//! are replaced by the identity, so boundary entries of every solution are
//! exactly zero. `R = L^T P`, with `P A_1 P^T = L L^T` the Cholesky
//! factorization of the unit-coefficient operator, maps nodal vectors with
//! zero boundary values to coordinates whose Euclidean norm is the `H^1_0`
//! seminorm.

pub mod cholesky;
pub mod grid;
pub mod sparse;

use rayon::prelude::*;

pub use cholesky::{Factor, Symbolic};
pub use grid::{build_grid, nodes_per_side, prolongate, write_grid_text, GridLevel, MAX_LEVEL};
pub use sparse::SparseOperator;

use crate::error::{invalid, Error, Result};
use crate::field::{sine_mode, CoefficientModel};

const UNSET: u32 = u32::MAX;

/// `G[q][a][b] = 1/4 grad phi_a . grad phi_b` at Gauss point `q` of the
/// reference square (the quadrature weight is folded in; `h` cancels).
fn gradient_products() -> [[[f64; 4]; 4]; 4] {
    let mut g = [[[0.0; 4]; 4]; 4];
    let shape = |s: usize, t: f64| if s == 0 { 1.0 - t } else { t };
    let dshape = |s: usize| if s == 0 { -1.0 } else { 1.0 };
    for (q, gq) in g.iter_mut().enumerate() {
        let (xi, eta) = (grid::GAUSS_01[q % 2], grid::GAUSS_01[q / 2]);
        let grad = |a: usize| {
            let (ax, ay) = (a % 2, a / 2);
            [dshape(ax) * shape(ay, eta), shape(ax, xi) * dshape(ay)]
        };
        for a in 0..4 {
            for b in 0..4 {
                let (ga, gb) = (grad(a), grad(b));
                gq[a][b] = 0.25 * (ga[0] * gb[0] + ga[1] * gb[1]);
            }
        }
    }
    g
}

/// Nested-dissection order of the interior nodes, boundary nodes first.
fn nested_dissection(grid: &GridLevel) -> Vec<usize> {
    fn split(grid: &GridLevel, i0: usize, i1: usize, j0: usize, j1: usize, out: &mut Vec<usize>) {
        let (w, h) = (i1 - i0, j1 - j0);
        if w == 0 || h == 0 {
            return;
        }
        if w * h <= 16 {
            for j in j0..j1 {
                for i in i0..i1 {
                    out.push(grid.index(i, j));
                }
            }
            return;
        }
        if w >= h {
            let mid = i0 + w / 2;
            split(grid, i0, mid, j0, j1, out);
            split(grid, mid + 1, i1, j0, j1, out);
            out.extend((j0..j1).map(|j| grid.index(mid, j)));
        } else {
            let mid = j0 + h / 2;
            split(grid, i0, i1, j0, mid, out);
            split(grid, i0, i1, mid + 1, j1, out);
            out.extend((i0..i1).map(|i| grid.index(i, mid)));
        }
    }
    let m = grid.nodes_per_side();
    let mut order: Vec<usize> = (0..grid.node_count()).filter(|&k| grid.is_boundary(k)).collect();
    split(grid, 1, m - 1, 1, m - 1, &mut order);
    order
}

/// Everything about one grid level that does not depend on the coefficient.
#[derive(Debug)]
pub struct FemLevel {
    grid: GridLevel,
    template: SparseOperator,
    /// Storage position of local pair `(a, b)` of every element, or `UNSET`
    /// when either node lies on the boundary.
    scatter: Vec<u32>,
    boundary_diag: Vec<usize>,
    symbolic: Symbolic,
    unit: Factor,
    mass: Vec<f64>,
    load: Vec<f64>,
    psi_h1: Vec<f64>,
    quad: Vec<f64>,
}

impl FemLevel {
    pub fn new(level: usize) -> Result<Self> {
        let grid = build_grid(level)?;
        let m = grid.nodes_per_side();
        let n = grid.node_count();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(9 * n);
        row_ptr.push(0);
        for k in 0..n {
            if grid.is_boundary(k) {
                col_idx.push(k);
            } else {
                let (i, j) = (k % m, k / m);
                for jj in j - 1..=j + 1 {
                    for ii in i - 1..=i + 1 {
                        let kk = grid.index(ii, jj);
                        if !grid.is_boundary(kk) {
                            col_idx.push(kk);
                        }
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        let template = SparseOperator::with_pattern(n, row_ptr, col_idx, true);
        if template.nnz() >= UNSET as usize {
            return Err(Error::ResourceLimit(format!("level {level} has too many nonzeros")));
        }
        let ne = grid.elements_per_side();
        let mut scatter = vec![UNSET; ne * ne * 16];
        for ey in 0..ne {
            for ex in 0..ne {
                let nodes = grid.element_nodes(ex, ey);
                let base = (ex + ne * ey) * 16;
                for a in 0..4 {
                    for b in 0..4 {
                        let (ka, kb) = (nodes[a], nodes[b]);
                        if !grid.is_boundary(ka) && !grid.is_boundary(kb) {
                            scatter[base + 4 * a + b] =
                                template.position(ka, kb).expect("stencil pattern") as u32;
                        }
                    }
                }
            }
        }
        let boundary_diag = (0..n)
            .filter(|&k| grid.is_boundary(k))
            .map(|k| template.position(k, k).unwrap())
            .collect();
        let symbolic = Symbolic::new(&template, nested_dissection(&grid))?;
        let h = grid.mesh_size();
        let mut mass = vec![0.0; n];
        for ey in 0..ne {
            for ex in 0..ne {
                for k in grid.element_nodes(ex, ey) {
                    mass[k] += 0.25 * h * h;
                }
            }
        }
        let load: Vec<f64> = mass
            .iter()
            .enumerate()
            .map(|(k, &v)| if grid.is_boundary(k) { 0.0 } else { v })
            .collect();
        let quad = grid.quadrature_coords();
        let mut level = FemLevel {
            grid,
            template,
            scatter,
            boundary_diag,
            symbolic,
            unit: Factor::empty(),
            mass,
            load,
            psi_h1: Vec::new(),
            quad,
        };
        let unit_op = level.assemble_indexed(|_, _| 1.0)?;
        level.unit = level.symbolic.factor(&unit_op)?;
        level.psi_h1 = level.symbolic.solve_r_transpose(&level.unit, &level.load);
        Ok(level)
    }

    pub fn grid(&self) -> &GridLevel {
        &self.grid
    }

    pub fn level(&self) -> usize {
        self.grid.level()
    }

    pub fn dim(&self) -> usize {
        self.grid.node_count()
    }

    pub fn symbolic(&self) -> &Symbolic {
        &self.symbolic
    }

    /// `(m)_i = int phi_i dx`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Assembles with the coefficient given at Gauss points by 1D indices:
    /// `coef(qx, qy)` is the value at `(quad[qx], quad[qy])`.
    pub fn assemble_indexed(&self, coef: impl Fn(usize, usize) -> f64) -> Result<SparseOperator> {
        let g = gradient_products();
        let ne = self.grid.elements_per_side();
        let mut op = self.template.clone();
        let values = op.values_mut();
        for ey in 0..ne {
            for ex in 0..ne {
                let mut aq = [0.0; 4];
                for (q, a) in aq.iter_mut().enumerate() {
                    let (qx, qy) = (2 * ex + q % 2, 2 * ey + q / 2);
                    *a = coef(qx, qy);
                    if !(*a > 0.0 && a.is_finite()) {
                        return Err(Error::Ellipticity(format!(
                            "coefficient {a} at ({:.6}, {:.6})",
                            self.quad[qx], self.quad[qy]
                        )));
                    }
                }
                let base = (ex + ne * ey) * 16;
                for a in 0..4 {
                    for b in 0..4 {
                        let pos = self.scatter[base + 4 * a + b];
                        if pos != UNSET {
                            let v: f64 = (0..4).map(|q| aq[q] * g[q][a][b]).sum();
                            values[pos as usize] += v;
                        }
                    }
                }
            }
        }
        for &p in &self.boundary_diag {
            values[p] = 1.0;
        }
        Ok(op)
    }

    /// Assembles with a coefficient given as a function of position.
    pub fn assemble(&self, coef: impl Fn([f64; 2]) -> f64) -> Result<SparseOperator> {
        let quad = &self.quad;
        self.assemble_indexed(|qx, qy| coef([quad[qx], quad[qy]]))
    }

    /// Operator of the model coefficient at parameter `y`.
    pub fn assemble_model(&self, model: &CoefficientModel, y: &[f64]) -> Result<SparseOperator> {
        let w = model.fluctuation_weights(y)?;
        let active: Vec<(f64, Vec<f64>)> = w
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(n, &c)| (c, self.quad.iter().map(|&t| sine_mode(n + 1, t)).collect()))
            .collect();
        self.assemble_indexed(|qx, qy| {
            let s: f64 = active.iter().map(|(c, t)| c * t[qx] * t[qy]).sum();
            model.from_fluctuation(s)
        })
    }

    /// Solution with unit load for a given operator.
    pub fn solve_operator(&self, op: &SparseOperator) -> Result<Vec<f64>> {
        let f = self.symbolic.factor(op)?;
        Ok(self.symbolic.solve(&f, &self.load))
    }

    pub fn solve_model(&self, model: &CoefficientModel, y: &[f64]) -> Result<Vec<f64>> {
        self.solve_operator(&self.assemble_model(model, y)?)
    }

    /// `R c`; its norm is the `H^1_0` seminorm for zero-boundary `c`.
    pub fn to_h1(&self, c: &[f64]) -> Vec<f64> {
        self.symbolic.apply_rt(&self.unit, c)
    }

    /// `R^{-1} z`.
    pub fn from_h1(&self, z: &[f64]) -> Vec<f64> {
        self.symbolic.solve_rt(&self.unit, z)
    }

    pub fn h1_seminorm(&self, c: &[f64]) -> f64 {
        self.to_h1(c).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `psi(v) = m^T v = int v dx`.
    pub fn functional_psi(&self, v: &[f64]) -> f64 {
        self.mass.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `g = R^{-T} m`, so that `psi(c) = g^T (R c)` for zero-boundary `c`.
    pub fn psi_h1(&self) -> &[f64] {
        &self.psi_h1
    }
}

impl Factor {
    fn empty() -> Self {
        Factor::from_parts(Vec::new(), Vec::new())
    }
}

/// The grid levels `0..=max_level` with their unit-coefficient factors.
#[derive(Debug)]
pub struct FemHierarchy {
    levels: Vec<FemLevel>,
}

impl FemHierarchy {
    pub fn new(max_level: usize) -> Result<Self> {
        if max_level > MAX_LEVEL {
            return invalid(format!("level {max_level} exceeds {MAX_LEVEL}"));
        }
        let levels = (0..=max_level)
            .into_par_iter()
            .map(FemLevel::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(FemHierarchy { levels })
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> Result<&FemLevel> {
        self.levels
            .get(l)
            .ok_or_else(|| Error::InvalidArgument(format!("level {l} was not built")))
    }

    pub fn solve_at(&self, model: &CoefficientModel, y: &[f64], l: usize) -> Result<Vec<f64>> {
        self.level(l)?.solve_model(model, y)
    }

    /// Nodal values of `u_l(y) - u_{l-1}(y)` on level `l` (`u_{-1} = 0`).
    pub fn delta_nodal(&self, model: &CoefficientModel, y: &[f64], l: usize) -> Result<Vec<f64>> {
        let mut u = self.solve_at(model, y, l)?;
        if l > 0 {
            let coarse = prolongate(&self.solve_at(model, y, l - 1)?, l)?;
            for (a, b) in u.iter_mut().zip(coarse) {
                *a -= b;
            }
        }
        Ok(u)
    }

    /// `R_l (u_l(y) - u_{l-1}(y))`.
    pub fn delta_vector(&self, model: &CoefficientModel, y: &[f64], l: usize) -> Result<Vec<f64>> {
        let d = self.delta_nodal(model, y, l)?;
        Ok(self.level(l)?.to_h1(&d))
    }

    /// Nodal vector at `to` of an `H^1` coordinate vector given at `from <= to`.
    pub fn h1_to_nodal(&self, z: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
        if from > to {
            return invalid("cannot restrict to a coarser level");
        }
        let mut v = self.level(from)?.from_h1(z);
        for l in from + 1..=to {
            v = prolongate(&v, l)?;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Decay, FieldKind};

    #[test]
    fn unit_stencil_diagonal() {
        for l in 0..3 {
            let lev = FemLevel::new(l).unwrap();
            let op = lev.assemble(|_| 1.0).unwrap();
            let g = lev.grid();
            let k = g.index(2, 2);
            assert!((op.get(k, k) - 8.0 / 3.0).abs() < 1e-14);
            assert!((op.get(k, k + 1) + 1.0 / 3.0).abs() < 1e-14);
            assert!((op.get(k, k + g.nodes_per_side() + 1) + 1.0 / 3.0).abs() < 1e-14);
            assert_eq!(op.asymmetry(), 0.0);
        }
    }

    #[test]
    fn linear_in_coefficient() {
        let lev = FemLevel::new(1).unwrap();
        let a1 = lev.assemble(|_| 1.0).unwrap();
        let a2 = lev.assemble(|_| 2.0).unwrap();
        for k in 0..lev.dim() {
            if lev.grid().is_boundary(k) {
                continue;
            }
            for (j, p) in a1.row_entries(k) {
                assert!((a2.values()[p] - 2.0 * a1.values()[p]).abs() < 1e-14, "{k} {j}");
            }
        }
    }

    #[test]
    fn nonpositive_coefficient_is_rejected() {
        let lev = FemLevel::new(0).unwrap();
        assert!(matches!(lev.assemble(|x| x[0] - 0.5), Err(Error::Ellipticity(_))));
    }

    #[test]
    fn constant_one_has_unit_integral() {
        for l in 0..4 {
            let lev = FemLevel::new(l).unwrap();
            let v = vec![1.0; lev.dim()];
            assert!((lev.functional_psi(&v) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_solution_for_symmetric_data() {
        let h = FemHierarchy::new(3).unwrap();
        let model = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 3, 2.0).unwrap();
        let u = h.solve_at(&model, &[0.4, -0.7, 0.2], 3).unwrap();
        let g = h.level(3).unwrap().grid();
        let m = g.nodes_per_side();
        let mut worst = 0.0_f64;
        for j in 0..m {
            for i in 0..m {
                worst = worst.max((u[g.index(i, j)] - u[g.index(j, i)]).abs());
            }
        }
        assert!(worst < 1e-12);
        for k in 0..g.node_count() {
            if g.is_boundary(k) {
                assert_eq!(u[k], 0.0);
            }
        }
    }

    #[test]
    fn h1_coordinates_reproduce_energy() {
        let lev = FemLevel::new(2).unwrap();
        let a = lev.assemble(|_| 1.0).unwrap();
        let c: Vec<f64> = (0..lev.dim())
            .map(|k| if lev.grid().is_boundary(k) { 0.0 } else { (k as f64 * 0.37).sin() })
            .collect();
        let energy: f64 = a.mul_vec(&c).iter().zip(&c).map(|(x, y)| x * y).sum();
        let z = lev.to_h1(&c);
        let zz: f64 = z.iter().map(|v| v * v).sum();
        assert!((zz - energy).abs() <= 1e-10 * energy);
        let back = lev.from_h1(&z);
        for (x, y) in back.iter().zip(&c) {
            assert!((x - y).abs() < 1e-12);
        }
        let direct = lev.functional_psi(&c);
        let via: f64 = lev.psi_h1().iter().zip(&z).map(|(x, y)| x * y).sum();
        assert!((direct - via).abs() < 1e-13);
    }

    #[test]
    fn delta_at_level_zero_is_the_solution() {
        let h = FemHierarchy::new(1).unwrap();
        let model = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 2, 2.0).unwrap();
        let y = [0.3, 0.1];
        let d = h.delta_vector(&model, &y, 0).unwrap();
        let u = h.level(0).unwrap().to_h1(&h.solve_at(&model, &y, 0).unwrap());
        assert_eq!(d, u);
    }
}
