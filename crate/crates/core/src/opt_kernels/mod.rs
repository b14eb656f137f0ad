//! Optimization building blocks shared by the solvers.

pub mod dual;
pub mod ellipsoid;
pub mod lp;
pub mod sca;
pub mod water_fill;

pub use dual::{best_schedule, minimize_dual, near_optimal_schedules, wf_gain, DualConfig, DualEval, DualOracle, DualOutcome, DualPoint, Mode, ScheduleChoice, ScheduleOptions, SnTerm, MU_FLOOR};
pub use ellipsoid::{ellipsoid_minimize, Cut, CutOracle, EllipsoidConfig, EllipsoidResult, EllipsoidState};
pub use sca::{sca_solve, ScaSolution, ScaSubproblem};
pub use lp::{lp_solve, LpProblem, LpSolution};
pub use water_fill::{water_fill, water_fill_budget, water_level, WaterFill};
