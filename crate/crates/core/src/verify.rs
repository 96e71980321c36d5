//! Self-checks run by `mltc verify`: each suite compares the implementation
//! with an independent oracle and records the error against a tolerance.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::collocation::{chebyshev_nodes, lagrange_weights_at, quadrature_weights};
use crate::cross::{approximate_tensor, ApproxOptions, EntryFibers, HTensorOracle};
use crate::error::Result;
use crate::fem::{nodes_per_side, FemLevel};
use crate::htensor::HTensor;
use crate::multilevel::LevelPlan;
use crate::synthetic::{fixed_rank_htensor, random_htensor};
use crate::tree::{DimensionTree, TreeShape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Multiplies every tolerance; values below one make checks stricter.
    pub tolerance_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { tolerance_scale: 1.0 }
    }
}

/// One comparison; it passes when `error < tolerance * scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub checks: Vec<Check>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// One line per check, then a total; free of timings so repeated runs
    /// print identical text.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<5} {:<44} error {:>10.3e}  tol {:>9.2e}  {}",
                c.suite,
                c.name,
                c.error,
                c.tolerance,
                if c.passed { "ok" } else { "FAIL" }
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(s, "{} checks, {} failed", self.checks.len(), failed);
        s
    }
}

struct Recorder {
    scale: f64,
    checks: Vec<Check>,
}

impl Recorder {
    fn check(&mut self, suite: &'static str, name: impl Into<String>, error: f64, tolerance: f64) {
        let passed = error.is_finite() && error < tolerance * self.scale;
        self.checks.push(Check {
            suite,
            name: name.into(),
            error,
            tolerance,
            passed,
        });
    }

    /// Exact agreement of integers, recorded as an error of 0 or 1.
    fn exact(&mut self, suite: &'static str, name: impl Into<String>, equal: bool) {
        self.check(suite, name, if equal { 0.0 } else { 1.0 }, 0.5);
    }
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifySummary> {
    let mut rec = Recorder {
        scale: opts.tolerance_scale,
        checks: Vec::new(),
    };
    ht_suite(&mut rec)?;
    cross_suite(&mut rec)?;
    fem_suite(&mut rec)?;
    ml_suite(&mut rec)?;
    Ok(VerifySummary { checks: rec.checks })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn ht_suite(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases: [(&[usize], TreeShape); 4] = [
        (&[3, 4, 2, 5], TreeShape::Balanced),
        (&[3, 4, 2, 5], TreeShape::Linear),
        (&[2, 3, 2, 3, 2], TreeShape::Balanced),
        (&[6], TreeShape::Balanced),
    ];
    for (sizes, shape) in cases {
        let x = random_htensor(&mut rng, sizes, 3, shape);
        let dense = x.full()?;
        let tag = format!("{sizes:?} {shape:?}");
        let mut idx = vec![0; sizes.len()];
        let mut worst = 0.0f64;
        for _ in 0..dense.len() {
            worst = worst.max((x.entry(&idx)? - dense.get(&idx)).abs());
            crate::htensor::increment(&mut idx, sizes);
        }
        let scale = max_abs(dense.data());
        rec.check("ht", format!("entries vs dense {tag}"), worst / scale, 1e-12);
        let fro = dense.frobenius_norm();
        rec.check("ht", format!("norm vs dense {tag}"), (x.norm() - fro).abs() / fro, 1e-12);
        let tree = DimensionTree::new(sizes.len(), shape)?;
        let back = HTensor::from_dense(&dense, tree, 1e-12)?.full()?;
        let diff: Vec<f64> = back.data().iter().zip(dense.data()).map(|(a, b)| a - b).collect();
        let err = diff.iter().map(|v| v * v).sum::<f64>().sqrt() / fro;
        rec.check("ht", format!("dense round trip {tag}"), err, 1e-10);
    }
    let vectors = vec![vec![1.0, 2.0], vec![0.5, -1.0, 3.0], vec![2.0, 1.0]];
    let one = HTensor::rank_one(DimensionTree::new(3, TreeShape::Balanced)?, &vectors)?;
    rec.check("ht", "rank-one effective rank", (one.rank_stats().r_eff - 1.0).abs(), 1e-9);
    Ok(())
}

fn cross_suite(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cases: [(&[usize], usize); 3] = [(&[5; 6], 3), (&[4, 5, 3, 5, 4, 5], 2), (&[5; 4], 1)];
    for (sizes, rank) in cases {
        let x = fixed_rank_htensor(&mut rng, sizes, rank, TreeShape::Balanced);
        let oracle = EntryFibers(HTensorOracle(&x));
        let (y, report) = approximate_tensor(&oracle, &ApproxOptions::new(1e-10), &mut rng)?;
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let idx: Vec<usize> = sizes.iter().map(|&n| rng.random_range(0..n)).collect();
            let exact = x.entry(&idx)?;
            let rel = (y.entry(&idx)? - exact).abs() / exact.abs().max(1e-300);
            worst = worst.max(rel);
        }
        let tag = format!("{sizes:?} rank {rank}");
        rec.check("cross", format!("probe error {tag}"), worst, 1e-8);
        if sizes.len() < 6 {
            continue;
        }
        let total: usize = sizes.iter().product();
        rec.check("cross", format!("step 2 share {tag}"), report.step2_entries as f64 / total as f64, 0.05);
    }
    Ok(())
}

/// `psi(u)` for `-div(a grad u) = 1` on the unit square with constant `a`,
/// from the double sine series.
pub fn psi_series(a: f64, odd_terms: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..odd_terms {
        let m = (2 * i + 1) as f64;
        for j in 0..odd_terms {
            let n = (2 * j + 1) as f64;
            s += 1.0 / (m * m * n * n * (m * m + n * n));
        }
    }
    64.0 / PI.powi(6) * s / a
}

fn fem_suite(rec: &mut Recorder) -> Result<()> {
    let a = 2.0;
    let exact = psi_series(a, 1000);
    let mut psi = Vec::new();
    for l in 0..=5 {
        let lev = FemLevel::new(l)?;
        let u = lev.solve_operator(&lev.assemble(|_| a)?)?;
        psi.push(lev.functional_psi(&u));
    }
    rec.check("fem", "psi at level 5 vs series", (psi[5] - exact).abs(), 2e-5);
    // Galerkin orthogonality: a |u - u_l|^2 = psi(u) - psi(u_l).
    let err: Vec<f64> = psi.iter().map(|p| ((exact - p) / a).sqrt()).collect();
    for l in 1..=5 {
        rec.check("fem", format!("energy error ratio level {l}"), (err[l - 1] / err[l] - 2.0).abs(), 0.4);
    }
    rec.check("fem", "psi increases with level", if psi.windows(2).all(|w| w[0] < w[1]) { 0.0 } else { 1.0 }, 0.5);
    Ok(())
}

fn ml_suite(rec: &mut Recorder) -> Result<()> {
    let plan = LevelPlan::new(7, 10, 0.25)?;
    rec.exact("ml", "degrees for L = 7", plan.degrees() == vec![4, 3, 3, 2, 2, 1, 1, 0]);
    let nodes: Vec<usize> = plan.levels.iter().map(|s| s.nodes).collect();
    let expect: Vec<usize> = (0..=7).map(|l| nodes_per_side(l).pow(2)).collect();
    rec.exact("ml", "spatial nodes for L = 7", nodes == expect && nodes[7] == 263_169);
    let eps_err = plan
        .levels
        .iter()
        .map(|s| (s.eps - 0.25 * 2f64.powi(s.level as i32 - 7)).abs())
        .fold(0.0, f64::max);
    rec.check("ml", "level tolerances", eps_err, 1e-15);
    for p in [0, 1, 2, 4, 7] {
        let w = quadrature_weights(p);
        let t = chebyshev_nodes(p);
        let mut worst = 0.0f64;
        for k in 0..=p {
            let q: f64 = w.iter().zip(&t).map(|(w, t)| w * t.powi(k as i32)).sum();
            let exact = if k % 2 == 0 { 1.0 / (k as f64 + 1.0) } else { 0.0 };
            worst = worst.max((q - exact).abs());
        }
        rec.check("ml", format!("quadrature exact to degree {p}"), worst, 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(13 + p as u64);
        let mut pu = 0.0f64;
        for _ in 0..50 {
            let y: f64 = rng.random_range(-1.0..=1.0);
            pu = pu.max((lagrange_weights_at(p, y).iter().sum::<f64>() - 1.0).abs());
        }
        rec.check("ml", format!("partition of unity degree {p}"), pu, 1e-12);
    }
    Ok(())
}
