//! Closed-loop simulation: replanning every 100 ms, tracking at 100 Hz and
//! the 9-DOF plant at 1 ms, with metrics and CSV output.
//!
//! Solver wall time is recorded but does not advance simulated time. With
//! `real_time = true` every plan only takes effect one replanning period
//! after it was requested.

mod output;
mod run;
mod scenario;

pub use output::{aligned_series, compare, write_comparison, write_metrics, write_run, write_trace, Comparison, ALIGN_BIN};
pub use run::{run_scenario, Completion, ReplanRecord, RunMetrics, RunOutput, TraceRow, REPLAN_BUDGET_MS, RUNOUT};
pub use scenario::{ScenarioConfig, OBSTACLE_JITTER, OFFSET_JITTER, PLANT_STEP};
