//! Feasibility-seeking by dynamic string averaging of projections.
//!
//! This crate solves split feasibility problems whose domain-side
//! constraints are half-spaces (plus the nonnegative orthant) and whose
//! range-side constraints may be *percentage-violation constraints*:
//! non-convex sets admitting an exact projection that allows a bounded
//! number of bound violations. Range constraints are transported to the
//! domain through Landweber-type operators, and the iteration averages
//! the end-points of operator strings whose composition order and weights
//! may change every step.
//!
//! The main pieces:
//!
//! - [`operators`]: projection/relaxation primitives and composable
//!   operator trees.
//! - [`pvc`]: count-constrained sets, violation reports, and their exact
//!   projection.
//! - [`landweber`]: linear maps (dense or sparse), power-iteration norm
//!   bounds, and the Landweber-type operators built from them.
//! - [`string_averaging`]: plans, strategies, and the solve loop.
//! - [`rttp`]: block-structured treatment-planning problems, synthetic
//!   generators, DVH and plan evaluation.
//! - [`cli`]: the problem/config/trace file formats and the `generate`,
//!   `solve`, `check`, `report` commands used by the `sacq` binary.
//!
//! See the crate examples for runnable walkthroughs of each capability.

pub mod cli;
pub mod error;
pub mod landweber;
pub mod operators;
pub mod pvc;
pub mod rttp;
pub mod string_averaging;

pub use error::{Error, PlanError, Result};
pub use landweber::{
    apply_landweber, fixed_point_residual, make_block_operator, spectral_norm_sq, LandweberOp,
    LinearMap,
};
pub use operators::{
    apply, cutter_residual, project_halfspace, project_orthant, relax, HalfSpace, OperatorNode,
    RelaxationParam, Sense, Vector,
};
pub use pvc::{count_violations, is_member, project_pvc, translate_bounds, PvcSet, ViolationReport};
pub use rttp::{
    compute_dvh, evaluate_plan, generate_feasible_instance, generate_phantom, translate_problem,
    violation_budget, BlockCounts, BlockDims, BlockEval, BlockSpec, DvhCurve, InstanceDims,
    IterationParams, PhantomConfig, PlanEval, PvcParams, SplitProblem, DEFAULT_CHECK_TOL,
};
pub use string_averaging::{
    adaptive_update, next_plan, plan_apply, solve, string_apply, validate_plan, IndexVector,
    LambdaSchedule, PlanConstraints, SolveConfig, SolveOutcome, SolverState, StartPoint, Status,
    Strategy, StringPlan, TraceRecord,
};
