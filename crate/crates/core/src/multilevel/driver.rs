//! The level loop: one cross approximation of the difference tensor per level.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{CollocationGrid, LevelPlan, LevelSpec};
use super::surrogate::MLSurrogate;
use crate::cross::{approximate_tensor, ApproxOptions, ApproxReport, FiberOracle};
use crate::error::{Error, Result};
use crate::fem::FemHierarchy;
use crate::field::CoefficientModel;
use crate::htensor::HTensor;
use crate::tree::TreeShape;

/// Fibers `R_l (u_l(y_k) - u_{l-1}(y_k))` at the collocation points of one
/// level, with a shared counter of PDE solves.
pub struct LevelFibers<'a> {
    fem: &'a FemHierarchy,
    model: &'a CoefficientModel,
    level: usize,
    grid: CollocationGrid,
    solves: &'a AtomicUsize,
    max_solves: usize,
}

impl<'a> LevelFibers<'a> {
    pub fn new(
        fem: &'a FemHierarchy,
        model: &'a CoefficientModel,
        level: usize,
        degree: usize,
        solves: &'a AtomicUsize,
        max_solves: usize,
    ) -> Self {
        LevelFibers {
            fem,
            model,
            level,
            grid: CollocationGrid::new(degree, model.terms()),
            solves,
            max_solves,
        }
    }

    /// PDE solves needed per collocation point.
    pub fn solves_per_point(&self) -> usize {
        if self.level == 0 {
            1
        } else {
            2
        }
    }
}

impl FiberOracle for LevelFibers<'_> {
    fn param_sizes(&self) -> Vec<usize> {
        vec![self.grid.degree + 1; self.grid.params]
    }

    fn fiber_len(&self) -> usize {
        self.fem.level(self.level).map(|l| l.dim()).unwrap_or(0)
    }

    fn fiber(&self, param: &[usize]) -> Result<Vec<f64>> {
        let k = self.solves_per_point();
        let before = self.solves.fetch_add(k, Ordering::SeqCst);
        if before + k > self.max_solves {
            self.solves.fetch_sub(k, Ordering::SeqCst);
            return Err(Error::Budget(format!(
                "PDE solve budget of {} exhausted",
                self.max_solves
            )));
        }
        self.fem
            .delta_vector(self.model, &self.grid.point(param), self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlOptions {
    pub eps0: f64,
    pub shape: TreeShape,
    pub seed: u64,
    /// Random crosses added per enrichment round of the spatial basis.
    pub crosses_per_loop: usize,
    pub max_rank: usize,
    /// Entry evaluations allowed per level in the cross approximation.
    pub max_entry_evaluations: usize,
    /// PDE solves allowed over the whole run.
    pub max_pde_solves: usize,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            eps0: super::plan::DEFAULT_EPS0,
            shape: TreeShape::Balanced,
            seed: 1,
            crosses_per_loop: 3,
            max_rank: 150,
            max_entry_evaluations: 10_000_000,
            max_pde_solves: 1_000_000,
        }
    }
}

/// How level times were measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingMode {
    /// Process CPU time with a single worker thread.
    Cpu,
    /// Elapsed wall-clock time with several worker threads.
    Wall,
}

impl TimingMode {
    pub fn current() -> Self {
        if rayon::current_num_threads() == 1 {
            TimingMode::Cpu
        } else {
            TimingMode::Wall
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TimingMode::Cpu => "cpu",
            TimingMode::Wall => "wall",
        }
    }
}

enum Clock {
    Cpu(cpu_time::ProcessTime),
    Wall(Instant),
}

impl Clock {
    fn start(mode: TimingMode) -> Self {
        match mode {
            TimingMode::Cpu => Clock::Cpu(cpu_time::ProcessTime::now()),
            TimingMode::Wall => Clock::Wall(Instant::now()),
        }
    }

    fn seconds(&self) -> f64 {
        match self {
            Clock::Cpu(t) => t.elapsed().as_secs_f64(),
            Clock::Wall(t) => t.elapsed().as_secs_f64(),
        }
    }
}

/// Per-level summary, one row of the level table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub degree: usize,
    pub nodes: usize,
    pub eps: f64,
    pub r_eff: f64,
    pub r_max: usize,
    pub step1: usize,
    pub step2: usize,
    pub pde_solves: usize,
    pub time_s: f64,
    pub spatial_rank: usize,
    pub probe_error: f64,
    pub rounds: usize,
    pub storage: usize,
}

impl LevelDiagnostics {
    fn new(
        spec: &LevelSpec,
        report: &ApproxReport,
        ht: &HTensor,
        solves: usize,
        time_s: f64,
    ) -> Self {
        let stats = ht.rank_stats();
        LevelDiagnostics {
            level: spec.level,
            degree: spec.degree,
            nodes: spec.nodes,
            eps: spec.eps,
            r_eff: stats.r_eff,
            r_max: stats.r_max,
            step1: report.step1_fibers,
            step2: report.step2_entries,
            pde_solves: solves,
            time_s,
            spatial_rank: report.spatial_rank,
            probe_error: report.cross.probe_error,
            rounds: report.cross.rounds,
            storage: stats.storage_scalars,
        }
    }
}

/// Result of [`run_ml`]; after a budget abort the surrogate holds only the
/// completed levels and `aborted` names the cause.
#[derive(Debug, Clone)]
pub struct MlRun {
    pub surrogate: MLSurrogate,
    pub diagnostics: Vec<LevelDiagnostics>,
    pub timing: TimingMode,
    pub aborted: Option<String>,
}

/// Seed of the random stream of level `l`, independent of other levels.
fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(level as u64 + 1)
}

/// Builds the compressed difference tensors of levels `0..=max_level` in order.
pub fn run_ml(
    model: &CoefficientModel,
    fem: &FemHierarchy,
    max_level: usize,
    opts: &MlOptions,
) -> Result<MlRun> {
    let plan = LevelPlan::new(max_level, model.terms(), opts.eps0)?;
    if fem.max_level() < max_level {
        return Err(Error::InvalidArgument(format!(
            "finite element hierarchy stops at level {}",
            fem.max_level()
        )));
    }
    let timing = TimingMode::current();
    let solves = AtomicUsize::new(0);
    let mut tensors = Vec::new();
    let mut diagnostics = Vec::new();
    let mut aborted = None;
    for spec in &plan.levels {
        match build_level_counted(model, fem, spec, opts, &solves, timing) {
            Ok((ht, diag)) => {
                diagnostics.push(diag);
                tensors.push(ht);
            }
            Err(Error::Budget(msg)) => {
                log::warn!("level {} aborted: {msg}", spec.level);
                aborted = Some(format!("level {}: {msg}", spec.level));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let surrogate = MLSurrogate::new(model.clone(), plan, tensors)?;
    Ok(MlRun {
        surrogate,
        diagnostics,
        timing,
        aborted,
    })
}

/// Builds the compressed difference tensor of one level of a plan on its own,
/// as [`run_ml`] does for each level in turn.
pub fn build_level(
    model: &CoefficientModel,
    fem: &FemHierarchy,
    spec: &LevelSpec,
    opts: &MlOptions,
) -> Result<(HTensor, LevelDiagnostics)> {
    let solves = AtomicUsize::new(0);
    build_level_counted(model, fem, spec, opts, &solves, TimingMode::current())
}

fn build_level_counted(
    model: &CoefficientModel,
    fem: &FemHierarchy,
    spec: &LevelSpec,
    opts: &MlOptions,
    solves: &AtomicUsize,
    timing: TimingMode,
) -> Result<(HTensor, LevelDiagnostics)> {
    if fem.max_level() < spec.level {
        return Err(Error::InvalidArgument(format!(
            "finite element hierarchy stops at level {}",
            fem.max_level()
        )));
    }
    let clock = Clock::start(timing);
    let before = solves.load(Ordering::SeqCst);
    let fibers = LevelFibers::new(fem, model, spec.level, spec.degree, solves, opts.max_pde_solves);
    let mut approx = ApproxOptions::new(spec.eps);
    approx.shape = opts.shape;
    approx.basis.crosses_per_loop = opts.crosses_per_loop;
    approx.cross.max_rank = opts.max_rank;
    approx.cross.max_evaluations = opts.max_entry_evaluations;
    let mut rng = ChaCha8Rng::seed_from_u64(level_seed(opts.seed, spec.level));
    let (ht, report) = approximate_tensor(&fibers, &approx, &mut rng)?;
    let used = solves.load(Ordering::SeqCst) - before;
    let diag = LevelDiagnostics::new(spec, &report, &ht, used, clock.seconds());
    log::info!(
        "level {}: p={} r_max={} step1={} step2={} solves={} {:.2}s",
        diag.level,
        diag.degree,
        diag.r_max,
        diag.step1,
        diag.step2,
        diag.pde_solves,
        diag.time_s
    );
    Ok((ht, diag))
}
