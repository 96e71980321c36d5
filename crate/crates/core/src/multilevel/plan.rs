//! Level schedule and tensorized collocation grids.

use serde::{Deserialize, Serialize};

use crate::collocation::{chebyshev_nodes, lagrange_weights_at, quadrature_weights};
use crate::error::{invalid, Result};
use crate::fem::{nodes_per_side, MAX_LEVEL};

/// Tensor accuracy on the finest level.
pub const DEFAULT_EPS0: f64 = 0.25;

/// Parameters of one level of the multilevel sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: usize,
    pub mesh_size: f64,
    /// Isotropic polynomial degree `floor((L - l + 1) / 2)`.
    pub degree: usize,
    /// Relative tensor accuracy `2^(l - L) eps0`.
    pub eps: f64,
    /// Spatial degrees of freedom (all grid nodes).
    pub nodes: usize,
    /// Collocation points `(p + 1)^N`, as a float since it may exceed `u64`.
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub max_level: usize,
    pub params: usize,
    pub eps0: f64,
    pub levels: Vec<LevelSpec>,
}

impl LevelPlan {
    pub fn new(max_level: usize, params: usize, eps0: f64) -> Result<Self> {
        if params == 0 {
            return invalid("at least one parameter is required");
        }
        if max_level > MAX_LEVEL {
            return invalid(format!("level {max_level} exceeds {MAX_LEVEL}"));
        }
        if !(eps0.is_finite() && eps0 > 0.0) {
            return invalid(format!("eps0 must be positive, got {eps0}"));
        }
        let levels = (0..=max_level)
            .map(|l| {
                let degree = (max_level - l + 1) / 2;
                let m = nodes_per_side(l);
                LevelSpec {
                    level: l,
                    mesh_size: 1.0 / (m - 1) as f64,
                    degree,
                    eps: eps0 * 0.5f64.powi((max_level - l) as i32),
                    nodes: m * m,
                    points: ((degree + 1) as f64).powi(params as i32),
                }
            })
            .collect();
        Ok(LevelPlan {
            max_level,
            params,
            eps0,
            levels,
        })
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.levels.iter().map(|s| s.degree).collect()
    }
}

/// Chebyshev grid of degree `p` replicated over `N` parameters. Mode index
/// `k` maps to node `cos((2k+1) pi / (2(p+1)))`, so nodes decrease with `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationGrid {
    pub degree: usize,
    pub params: usize,
    pub nodes: Vec<f64>,
}

impl CollocationGrid {
    pub fn new(degree: usize, params: usize) -> Self {
        CollocationGrid {
            degree,
            params,
            nodes: chebyshev_nodes(degree),
        }
    }

    /// Parameter vector of a multi-index.
    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&k| self.nodes[k]).collect()
    }

    /// One Lagrange weight vector per parameter.
    pub fn lagrange_weights(&self, y: &[f64]) -> Vec<Vec<f64>> {
        y.iter().map(|&t| lagrange_weights_at(self.degree, t)).collect()
    }

    /// Quadrature weights for the uniform density, one vector per parameter.
    pub fn quadrature_weights(&self) -> Vec<Vec<f64>> {
        vec![quadrature_weights(self.degree); self.params]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_level_schedule() {
        let plan = LevelPlan::new(7, 10, DEFAULT_EPS0).unwrap();
        assert_eq!(plan.degrees(), vec![4, 3, 3, 2, 2, 1, 1, 0]);
        let nodes: Vec<usize> = plan.levels.iter().map(|s| s.nodes).collect();
        assert_eq!(nodes, vec![25, 81, 289, 1089, 4225, 16641, 66049, 263169]);
        assert_eq!(plan.levels[7].eps, 0.25);
        assert_eq!(plan.levels[0].eps, 0.25 / 128.0);
        assert_eq!(plan.levels[0].points, 5f64.powi(10));
        assert_eq!(plan.levels[7].points, 1.0);
    }

    #[test]
    fn small_schedules() {
        assert_eq!(LevelPlan::new(0, 1, 0.25).unwrap().degrees(), vec![0]);
        assert_eq!(LevelPlan::new(4, 5, 0.25).unwrap().degrees(), vec![2, 2, 1, 1, 0]);
        assert!(LevelPlan::new(3, 0, 0.25).is_err());
        assert!(LevelPlan::new(3, 2, 0.0).is_err());
        assert!(LevelPlan::new(13, 2, 0.25).is_err());
    }

    #[test]
    fn zero_index_is_the_largest_node() {
        let g = CollocationGrid::new(3, 4);
        let y = g.point(&[0, 0, 0, 0]);
        let top = g.nodes.iter().cloned().fold(f64::MIN, f64::max);
        assert!(y.iter().all(|&v| v == top));
    }

    proptest::proptest! {
        #[test]
        fn schedule_invariants(l in 0usize..=10, n in 1usize..30) {
            let plan = LevelPlan::new(l, n, DEFAULT_EPS0).unwrap();
            let d = plan.degrees();
            proptest::prop_assert!(d.windows(2).all(|w| w[0] >= w[1]));
            proptest::prop_assert_eq!(d[l], 0);
            for w in plan.levels.windows(2) {
                proptest::prop_assert_eq!(w[1].eps, 2.0 * w[0].eps);
            }
            proptest::prop_assert_eq!(plan.levels[l].eps, DEFAULT_EPS0);
        }

        #[test]
        fn grid_nodes_are_interior_decreasing_symmetric(p in 0usize..25) {
            let g = CollocationGrid::new(p, 1);
            proptest::prop_assert!(g.nodes.iter().all(|&t| t > -1.0 && t < 1.0));
            proptest::prop_assert!(g.nodes.windows(2).all(|w| w[0] > w[1]));
            for k in 0..=p {
                proptest::prop_assert!((g.nodes[k] + g.nodes[p - k]).abs() < 1e-15);
            }
        }
    }
}
