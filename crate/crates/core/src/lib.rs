//! Energy-optimal impulsive control of linear time-variant systems whose
//! control cost is a piecewise-defined, time-varying norm-like function.
//!
//! The crate is organized bottom-up:
//!
//! * [`astro`]: J2-perturbed relative orbital element dynamics, used to
//!   build `Γ(t)` for spacecraft formation problems.
//! * [`cost`]: norm-like costs with analytic support functions, control
//!   modes and piecewise schedule decomposition.
//! * [`lp`] and [`nnls`]: the two numerical kernels.
//! * [`dual`]: the restricted dual problem, constraint profiles and their
//!   local maxima.
//! * [`planner`]: initialization, iterative refinement, input extraction,
//!   lower bounds and the end-to-end planner.
//! * [`reference`]: direct and naive indirect solvers used as oracles and
//!   timing baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod astro;
pub mod cost;
pub mod dual;
pub mod lp;
pub mod nnls;
pub mod planner;
pub mod problem;
pub mod reference;

pub use cost::{ControlMode, CostModel, ModeSchedule, ThrusterSet};
pub use dual::{CandidateSet, DualSolution, ProfileSample};
pub use planner::{ManeuverPlan, PlannerConfig};
pub use problem::{GammaTable, Problem};
