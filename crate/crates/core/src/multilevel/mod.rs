//! Multilevel tensor collocation: the level schedule, the level loop, the
//! resulting surrogate and its error measures.

pub mod driver;
pub mod metrics;
pub mod plan;
pub mod surrogate;

pub use driver::{build_level, run_ml, LevelDiagnostics, LevelFibers, MlOptions, MlRun, TimingMode};
pub use metrics::{error_metrics, mean_errors, sample_parameters, ErrorMetrics};
pub use plan::{CollocationGrid, LevelPlan, LevelSpec, DEFAULT_EPS0};
pub use surrogate::{combine_levels, psi_of_levels, MLSurrogate, SurrogateLevel};
