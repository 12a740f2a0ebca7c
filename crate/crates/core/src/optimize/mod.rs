//! LP/MILP kernels and the scheduling model builders.

pub mod encode;
pub mod lp;
pub mod milp;
pub mod schedule;

pub use lp::{simplex_solve, LinearProgram, Row, Sense, SolveResult, SolveStatus};
pub use milp::{branch_and_bound, MilpModel, MilpOptions};
pub use encode::{bigm_bounds, encode_mlp_bigm, encode_region_union, NeuronBound};
pub use schedule::{build_schedule_problem, Mode, ScheduleModels, ScheduleProblem, ScheduleSolution};
