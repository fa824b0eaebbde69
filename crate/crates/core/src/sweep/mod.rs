//! Grid sweeps under a shared time budget with checkpoint pruning.

pub mod controller;
pub mod error;
pub mod grid;
pub mod prune;
pub mod report;
pub mod state;
pub mod worker;

pub use controller::{run_single, run_sweep, trial_dir, SingleRun, SweepOptions, METRICS_FILE};
pub use error::SweepError;
pub use grid::{build_grid, SearchSpace, TrialConfig};
pub use prune::{apply_rank_prune, apply_threshold_prune, eval_cadence, AuditEntry, PruneSchedule};
pub use report::{summarize_axis, Axis, AxisSummary, SweepReport, TrialSummary};
pub use state::{TrialState, TrialStatus};
pub use worker::{ScriptedTrial, StepOutcome, TrainerTrial, TrainerTrialSettings, TrialWorker};
