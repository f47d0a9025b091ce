//! File formats and command implementations for the `sacq` binary.
//!
//! Problems and configs are JSON documents with an explicit version tag;
//! traces and reports are CSV. Unknown fields are rejected with an error
//! naming them, and identical inputs and seeds produce byte-identical
//! trace files.

use std::path::Path;

pub mod check;
pub mod commands;
pub mod files;

pub use check::{check_solution, check_solution_default, BlockCheck, CheckReport};
pub use commands::{
    cmd_check, cmd_generate, cmd_report, cmd_solve, witness_path, CheckArgs, GenerateArgs,
    GenerateKind, PhantomArgs, RandomArgs, ReportArgs, SolveArgs,
};
pub use files::{
    complete_constraints, read_config, read_problem, read_solution, read_trace, trace_to_csv,
    write_config, write_problem, write_solution, write_trace, ConfigFile, LambdaFile, PlanFile,
    ProblemBlock, ProblemFile, SenseTag, SparseMatrixFile, StrategyFile, TraceData, X0Tag,
};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code when a solve finished without reaching the tolerance, or a
/// check found the solution infeasible.
pub const EXIT_UNSOLVED: i32 = 1;
/// Exit code for invalid parameters or malformed input files.
pub const EXIT_INVALID: i32 = 2;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 3;

pub(crate) fn display_path(path: &Path) -> String {
    path.display().to_string()
}
