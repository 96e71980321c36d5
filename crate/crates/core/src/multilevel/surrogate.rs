//! The multilevel surrogate `sum_l I_l[delta_l](y)` and its statistics.

use nalgebra::{DMatrix, DVector};

use super::plan::{CollocationGrid, LevelPlan, LevelSpec};
use crate::error::{invalid, Result};
use crate::fem::{prolongate, FemHierarchy};
use crate::field::CoefficientModel;
use crate::htensor::HTensor;

/// One compressed level: tensor over `(p+1)^N x n_l` holding `H^1` coordinates.
#[derive(Debug, Clone)]
pub struct SurrogateLevel {
    pub spec: LevelSpec,
    pub grid: CollocationGrid,
    pub tensor: HTensor,
    /// `tensor` with the spatial frame replaced by the identity.
    core: HTensor,
    spatial: DMatrix<f64>,
}

impl SurrogateLevel {
    pub fn new(spec: LevelSpec, params: usize, tensor: HTensor) -> Result<Self> {
        let grid = CollocationGrid::new(spec.degree, params);
        let sizes = tensor.mode_sizes();
        if sizes.len() != params + 1
            || sizes[..params].iter().any(|&s| s != spec.degree + 1)
            || sizes[params] != spec.nodes
        {
            return invalid(format!(
                "level {} tensor has modes {sizes:?}, expected {} x {} and {}",
                spec.level,
                params,
                spec.degree + 1,
                spec.nodes
            ));
        }
        let leaf = tensor.tree().leaf_of_mode(params);
        let spatial = tensor.frame(leaf).expect("leaf frame").clone();
        let core = tensor.with_leaf_frame(params, DMatrix::identity(spatial.ncols(), spatial.ncols()))?;
        Ok(SurrogateLevel {
            spec,
            grid,
            tensor,
            core,
            spatial,
        })
    }

    /// `H^1` coordinates of the level interpolant contracted with one weight
    /// vector per parameter.
    pub fn contract(&self, weights: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut w = weights.to_vec();
        w.push(vec![0.0; self.spatial.ncols()]);
        let c = self.core.contract_all_but(self.grid.params, &w)?;
        Ok((&self.spatial * DVector::from_vec(c)).as_slice().to_vec())
    }

    /// Level interpolant at `y`, in `H^1` coordinates.
    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.contract(&self.grid.lagrange_weights(y))
    }

    /// Exact mean of the level interpolant, in `H^1` coordinates.
    pub fn mean(&self) -> Result<Vec<f64>> {
        self.contract(&self.grid.quadrature_weights())
    }
}

#[derive(Debug, Clone)]
pub struct MLSurrogate {
    model: CoefficientModel,
    plan: LevelPlan,
    levels: Vec<SurrogateLevel>,
}

impl MLSurrogate {
    /// Tensors for levels `0..tensors.len()`; fewer than the plan has levels
    /// only for partial runs.
    pub fn new(model: CoefficientModel, plan: LevelPlan, tensors: Vec<HTensor>) -> Result<Self> {
        if plan.params != model.terms() {
            return invalid(format!(
                "plan has {} parameters, model has {}",
                plan.params,
                model.terms()
            ));
        }
        if tensors.len() > plan.levels.len() {
            return invalid("more tensors than planned levels");
        }
        let levels = tensors
            .into_iter()
            .zip(&plan.levels)
            .map(|(t, s)| SurrogateLevel::new(s.clone(), plan.params, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(MLSurrogate { model, plan, levels })
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.model
    }

    pub fn plan(&self) -> &LevelPlan {
        &self.plan
    }

    pub fn params(&self) -> usize {
        self.plan.params
    }

    pub fn levels(&self) -> &[SurrogateLevel] {
        &self.levels
    }

    /// Whether every planned level was built.
    pub fn is_complete(&self) -> bool {
        self.levels.len() == self.plan.levels.len()
    }

    /// Finest level that was built.
    pub fn top_level(&self) -> Result<usize> {
        match self.levels.len() {
            0 => invalid("surrogate has no levels"),
            n => Ok(n - 1),
        }
    }

    /// Every stored tensor multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        let tensors = self.levels.iter().map(|l| l.tensor.scaled(alpha)).collect();
        MLSurrogate::new(self.model.clone(), self.plan.clone(), tensors)
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.params() {
            return invalid(format!("expected {} parameters, got {}", self.params(), y.len()));
        }
        if let Some(v) = y.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return invalid(format!("parameter {v} outside [-1, 1]"));
        }
        Ok(())
    }

    /// Per-level interpolants at `y`, in `H^1` coordinates of their levels.
    pub fn eval_levels(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_point(y)?;
        self.levels.iter().map(|l| l.eval(y)).collect()
    }

    /// Surrogate at `y` as a nodal vector on the top level.
    pub fn eval(&self, fem: &FemHierarchy, y: &[f64]) -> Result<Vec<f64>> {
        combine_levels(fem, &self.eval_levels(y)?)
    }

    /// Per-level means, in `H^1` coordinates.
    pub fn mean_levels(&self) -> Result<Vec<Vec<f64>>> {
        self.levels.iter().map(SurrogateLevel::mean).collect()
    }

    /// Mean of the surrogate as a nodal vector on the top level.
    pub fn expectation(&self, fem: &FemHierarchy) -> Result<Vec<f64>> {
        combine_levels(fem, &self.mean_levels()?)
    }

    /// Mean of `psi(u) = int u dx` under the surrogate.
    pub fn expectation_psi(&self, fem: &FemHierarchy) -> Result<f64> {
        psi_of_levels(fem, &self.mean_levels()?)
    }

    /// `psi` of the surrogate at `y`.
    pub fn eval_psi(&self, fem: &FemHierarchy, y: &[f64]) -> Result<f64> {
        psi_of_levels(fem, &self.eval_levels(y)?)
    }
}

/// `sum_l P_{l -> top} R_l^{-1} z_l` for `z_l` given on levels `0..zs.len()`.
pub fn combine_levels(fem: &FemHierarchy, zs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    for (l, z) in zs.iter().enumerate() {
        let lev = fem.level(l)?;
        if z.len() != lev.dim() {
            return invalid(format!("level {l} vector has length {}, expected {}", z.len(), lev.dim()));
        }
        let own = lev.from_h1(z);
        acc = Some(match acc {
            None => own,
            Some(prev) => {
                let mut up = prolongate(&prev, l)?;
                for (a, b) in up.iter_mut().zip(own) {
                    *a += b;
                }
                up
            }
        });
    }
    acc.ok_or_else(|| crate::Error::InvalidArgument("no levels to combine".into()))
}

/// `psi` of the combined vector, computed level by level as `g_l . z_l`.
pub fn psi_of_levels(fem: &FemHierarchy, zs: &[Vec<f64>]) -> Result<f64> {
    let mut s = 0.0;
    for (l, z) in zs.iter().enumerate() {
        let g = fem.level(l)?.psi_h1();
        s += g.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Decay, FieldKind};
    use crate::multilevel::{run_ml, MlOptions};

    fn h1_rel(fem: &FemHierarchy, l: usize, a: &[f64], b: &[f64]) -> f64 {
        let lev = fem.level(l).unwrap();
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        lev.h1_seminorm(&d) / lev.h1_seminorm(b)
    }

    #[test]
    fn deterministic_model_collapses() {
        let model = CoefficientModel::new(FieldKind::Affine, Decay::Zero, 3, 2.0).unwrap();
        let fem = FemHierarchy::new(2).unwrap();
        let run = run_ml(&model, &fem, 2, &MlOptions::default()).unwrap();
        let s = &run.surrogate;
        let exact = fem.solve_at(&model, &[0.0; 3], 2).unwrap();
        let mean = s.expectation(&fem).unwrap();
        assert!(h1_rel(&fem, 2, &mean, &exact) < 1e-10);
        let a = s.eval(&fem, &[0.9, -0.3, 0.1]).unwrap();
        let b = s.eval(&fem, &[-0.5, 0.7, -1.0]).unwrap();
        assert!(h1_rel(&fem, 2, &a, &b) < 1e-10);
        let psi = fem.level(2).unwrap().functional_psi(&exact);
        assert!((s.expectation_psi(&fem).unwrap() - psi).abs() < 1e-10 * psi);
    }

    #[test]
    fn evaluation_is_linear_in_the_tensors() {
        let model = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 2, 2.0).unwrap();
        let fem = FemHierarchy::new(2).unwrap();
        let s = run_ml(&model, &fem, 2, &MlOptions::default()).unwrap().surrogate;
        let y = [0.31, -0.77];
        let base = s.eval(&fem, &y).unwrap();
        let scaled = s.scaled(-2.5).unwrap().eval(&fem, &y).unwrap();
        let top = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in base.iter().zip(&scaled) {
            assert!((-2.5 * a - b).abs() < 1e-12 * top);
        }
    }

    #[test]
    fn two_point_mean_is_the_node_average() {
        let model = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 1, 2.0).unwrap();
        let fem = FemHierarchy::new(2).unwrap();
        let s = run_ml(&model, &fem, 2, &MlOptions::default()).unwrap().surrogate;
        let level = &s.levels()[1];
        assert_eq!(level.spec.degree, 1);
        let mean = level.mean().unwrap();
        let nodes = &level.grid.nodes;
        let a = level.eval(&[nodes[0]]).unwrap();
        let b = level.eval(&[nodes[1]]).unwrap();
        for ((m, x), y) in mean.iter().zip(&a).zip(&b) {
            assert!((m - 0.5 * (x + y)).abs() < 1e-14 + 1e-12 * m.abs());
        }
    }

    #[test]
    fn rejects_points_outside_the_box() {
        let model = CoefficientModel::new(FieldKind::Affine, Decay::Exponential, 2, 2.0).unwrap();
        let fem = FemHierarchy::new(0).unwrap();
        let s = run_ml(&model, &fem, 0, &MlOptions::default()).unwrap().surrogate;
        assert!(s.eval(&fem, &[0.0, 1.5]).is_err());
        assert!(s.eval(&fem, &[0.0]).is_err());
    }
}
