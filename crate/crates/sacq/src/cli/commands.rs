//! Implementations of the `generate`, `solve`, `check` and `report`
//! commands. Each returns a process exit code:
//!
//! - 0: success (`solve`: status Solved; `check`: feasible)
//! - 1: finished without success (MaxIters/Stalled, infeasible solution)
//! - 2: invalid parameters or malformed input
//! - 3: I/O failure

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Error;
use crate::rttp::{
    evaluate_plan, generate_feasible_instance, generate_phantom, translate_problem, BlockDims,
    InstanceDims, PhantomConfig, PvcParams, DEFAULT_CHECK_TOL,
};
use crate::operators::{Sense, Vector};
use crate::string_averaging::{solve, Status};

use super::check::check_solution;
use super::files::{
    complete_constraints, read_config, read_problem, read_solution, read_trace, write_problem,
    write_solution, write_trace, ConfigFile, ProblemFile,
};
use super::{display_path, EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_UNSOLVED};

fn exit_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::NonFiniteIterate { .. } => EXIT_UNSOLVED,
        _ => EXIT_INVALID,
    }
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_for(err)
}

fn invalid(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    EXIT_INVALID
}

fn require_positive(name: &str, value: i64) -> Result<usize, i32> {
    if value <= 0 {
        Err(invalid(format!(
            "parameter '{name}' must be positive, got {value}"
        )))
    } else {
        Ok(value as usize)
    }
}

fn require_nonnegative(name: &str, value: i64) -> Result<usize, i32> {
    if value < 0 {
        Err(invalid(format!(
            "parameter '{name}' must be nonnegative, got {value}"
        )))
    } else {
        Ok(value as usize)
    }
}

fn pvc_from(name: &str, alpha: Option<f64>, beta: Option<f64>) -> Result<Option<PvcParams>, i32> {
    match (alpha, beta) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => PvcParams::new(a, b)
            .map(Some)
            .map_err(|e| invalid(format!("parameter '{name}': {e}"))),
        _ => Err(invalid(format!(
            "parameter '{name}': alpha and beta must be given together"
        ))),
    }
}

// ---------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PhantomArgs {
    pub grid_x: i64,
    pub grid_y: i64,
    pub beams: i64,
    pub beamlets: i64,
    pub kernel_width: f64,
    pub target_radius: f64,
    pub oar_radius: f64,
    pub target_alpha: Option<f64>,
    pub target_beta: Option<f64>,
    pub oar_alpha: Option<f64>,
    pub oar_beta: Option<f64>,
    pub margin: f64,
    pub tight_fraction: f64,
}

impl Default for PhantomArgs {
    fn default() -> Self {
        let d = PhantomConfig::default();
        Self {
            grid_x: d.grid.0 as i64,
            grid_y: d.grid.1 as i64,
            beams: d.beams as i64,
            beamlets: d.beamlets_per_beam as i64,
            kernel_width: d.kernel_width,
            target_radius: d.target_radius,
            oar_radius: d.oar_outer_radius,
            target_alpha: None,
            target_beta: None,
            oar_alpha: None,
            oar_beta: None,
            margin: d.margin,
            tight_fraction: d.tight_fraction,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomArgs {
    pub dimension: i64,
    pub upper_rows: i64,
    pub lower_rows: i64,
    pub upper_alpha: Option<f64>,
    pub upper_beta: Option<f64>,
    pub lower_alpha: Option<f64>,
    pub lower_beta: Option<f64>,
    pub upper_tight: i64,
    pub lower_tight: i64,
}

impl Default for RandomArgs {
    fn default() -> Self {
        Self {
            dimension: 50,
            upper_rows: 60,
            lower_rows: 40,
            upper_alpha: None,
            upper_beta: None,
            lower_alpha: None,
            lower_beta: None,
            upper_tight: 0,
            lower_tight: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum GenerateKind {
    Phantom(PhantomArgs),
    RandomFeasible(RandomArgs),
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub kind: GenerateKind,
    pub out: PathBuf,
    pub seed: u64,
}

/// Path of the witness that accompanies a random-feasible problem file.
pub fn witness_path(problem_path: &Path) -> PathBuf {
    problem_path.with_extension("witness.txt")
}

pub fn cmd_generate(args: &GenerateArgs) -> i32 {
    match &args.kind {
        GenerateKind::Phantom(p) => {
            let config = match phantom_config(p) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let (blocks, _geometry) = match generate_phantom(&config, args.seed) {
                Ok(v) => v,
                Err(e) => return fail(&e),
            };
            let dimension = blocks[0].map.cols();
            let file = ProblemFile::from_blocks(dimension, &blocks);
            if let Err(e) = write_problem(&args.out, &file) {
                return fail(&e);
            }
            println!("wrote {}", display_path(&args.out));
            EXIT_OK
        }
        GenerateKind::RandomFeasible(r) => {
            let dims = match random_dims(r) {
                Ok(d) => d,
                Err(code) => return code,
            };
            let (blocks, witness) = match generate_feasible_instance(&dims, args.seed) {
                Ok(v) => v,
                Err(e) => return fail(&e),
            };
            let file = ProblemFile::from_blocks(dims.dimension, &blocks);
            if let Err(e) = write_problem(&args.out, &file) {
                return fail(&e);
            }
            let wpath = witness_path(&args.out);
            if let Err(e) = write_solution(&wpath, &witness) {
                return fail(&e);
            }
            println!("wrote {}", display_path(&args.out));
            println!("wrote {}", display_path(&wpath));
            EXIT_OK
        }
    }
}

fn phantom_config(p: &PhantomArgs) -> Result<PhantomConfig, i32> {
    let grid_x = require_positive("grid", p.grid_x)?;
    let grid_y = require_positive("grid", p.grid_y)?;
    let beams = require_positive("beams", p.beams)?;
    let beamlets = require_positive("beamlets", p.beamlets)?;
    if p.kernel_width.is_nan() || p.kernel_width <= 0.0 {
        return Err(invalid(format!(
            "parameter 'kernel-width' must be positive, got {}",
            p.kernel_width
        )));
    }
    if p.target_radius.is_nan() || p.target_radius <= 0.0 {
        return Err(invalid(format!(
            "parameter 'target-radius' must be positive, got {}",
            p.target_radius
        )));
    }
    if p.oar_radius.is_nan() || p.oar_radius <= p.target_radius {
        return Err(invalid(format!(
            "parameter 'oar-radius' must exceed the target radius, got {}",
            p.oar_radius
        )));
    }
    Ok(PhantomConfig {
        grid: (grid_x, grid_y),
        beams,
        beamlets_per_beam: beamlets,
        kernel_width: p.kernel_width,
        target_radius: p.target_radius,
        oar_outer_radius: p.oar_radius,
        target_pvc: pvc_from("target-pvc", p.target_alpha, p.target_beta)?,
        oar_pvc: pvc_from("oar-pvc", p.oar_alpha, p.oar_beta)?,
        margin: p.margin,
        tight_fraction: p.tight_fraction,
    })
}

fn random_dims(r: &RandomArgs) -> Result<InstanceDims, i32> {
    let dimension = require_positive("dimension", r.dimension)?;
    let upper_rows = require_positive("upper-rows", r.upper_rows)?;
    let lower_rows = require_positive("lower-rows", r.lower_rows)?;
    Ok(InstanceDims {
        dimension,
        blocks: vec![
            BlockDims {
                name: "oar".into(),
                rows: upper_rows,
                sense: Sense::UpperLe,
                pvc: pvc_from("upper-pvc", r.upper_alpha, r.upper_beta)?,
                tight_rows: require_nonnegative("upper-tight", r.upper_tight)?,
            },
            BlockDims {
                name: "target".into(),
                rows: lower_rows,
                sense: Sense::LowerGe,
                pvc: pvc_from("lower-pvc", r.lower_alpha, r.lower_beta)?,
                tight_rows: require_nonnegative("lower-tight", r.lower_tight)?,
            },
        ],
    })
}

// ---------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub problem: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub verbose: bool,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    status: &'a str,
    iterations: usize,
    final_proximity: f64,
    dimension: usize,
    blocks: usize,
    operators: usize,
}

pub fn cmd_solve(args: &SolveArgs) -> i32 {
    let problem_file = match read_problem(&args.problem) {
        Ok(f) => f,
        Err(e) => return fail(&e),
    };
    let blocks = match problem_file.to_blocks() {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    let problem = match translate_problem(&blocks) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let config_file = match &args.config {
        Some(path) => match read_config(path) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        },
        None => ConfigFile::default(),
    };
    let mut solve_config = match config_file.to_solve_config(args.seed) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    solve_config.constraints =
        complete_constraints(&config_file, &solve_config, problem.operator_count());

    let outcome = match solve(&problem, &solve_config) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };

    if let Err(e) = fs::create_dir_all(&args.out) {
        return fail(&e.into());
    }
    let solution_path = args.out.join("solution.txt");
    let trace_path = args.out.join("trace.csv");
    let summary_path = args.out.join("summary.json");
    if let Err(e) = write_solution(&solution_path, &outcome.solution) {
        return fail(&e);
    }
    if let Err(e) = write_trace(&trace_path, &problem, &outcome.state.trace) {
        return fail(&e);
    }
    let final_proximity = outcome
        .state
        .trace
        .last()
        .map(|r| r.proximity)
        .unwrap_or(f64::NAN);
    let summary = Summary {
        status: outcome.status.as_str(),
        iterations: outcome.state.iteration,
        final_proximity,
        dimension: problem.dimension(),
        blocks: problem.block_count(),
        operators: problem.operator_count(),
    };
    let text = match serde_json::to_string_pretty(&summary) {
        Ok(mut t) => {
            t.push('\n');
            t
        }
        Err(e) => return invalid(e),
    };
    if let Err(e) = fs::write(&summary_path, text) {
        return fail(&e.into());
    }

    if args.verbose {
        for record in &outcome.state.trace {
            if record.k % 100 == 0 || record.k == outcome.state.iteration {
                println!("k={} proximity={}", record.k, record.proximity);
            }
        }
    }
    println!(
        "status {} after {} iterations, proximity {}",
        outcome.status.as_str(),
        outcome.state.iteration,
        final_proximity
    );
    println!("wrote {}", display_path(&args.out));
    match outcome.status {
        Status::Solved => EXIT_OK,
        Status::MaxIters | Status::Stalled => EXIT_UNSOLVED,
    }
}

// ---------------------------------------------------------------------
// check
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CheckArgs {
    pub problem: PathBuf,
    pub solution: PathBuf,
    pub tol: Option<f64>,
}

pub fn cmd_check(args: &CheckArgs) -> i32 {
    let problem = match read_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let x = match read_solution(&args.solution) {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    let tol = args.tol.unwrap_or(DEFAULT_CHECK_TOL);
    let report = match check_solution(&problem, &x, tol) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    for b in &report.blocks {
        let budget = match b.allowed {
            Some(k) => format!(
                ", original {}/{} allowed ({})",
                b.original_violations,
                k,
                if b.pvc_ok { "ok" } else { "exceeded" }
            ),
            None => String::new(),
        };
        println!(
            "block {}: {} of {} relaxed bounds violated{}",
            b.name, b.relaxed_violations, b.rows, budget
        );
    }
    if report.negative_entries > 0 {
        println!("{} negative solution entries", report.negative_entries);
    }
    if report.feasible {
        println!("feasible");
        EXIT_OK
    } else {
        let failing: Vec<&str> = report
            .blocks
            .iter()
            .filter(|b| b.relaxed_violations > 0 || !b.pvc_ok)
            .map(|b| b.name.as_str())
            .collect();
        println!("infeasible: {}", failing.join(", "));
        EXIT_UNSOLVED
    }
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub trace: PathBuf,
    pub out: PathBuf,
    /// When both the problem and the solution are given, DVH tables for
    /// the final iterate are emitted as well.
    pub problem: Option<PathBuf>,
    pub solution: Option<PathBuf>,
}

pub fn cmd_report(args: &ReportArgs) -> i32 {
    let trace = match read_trace(&args.trace) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    if trace.records.is_empty() {
        return invalid(format!(
            "{}: trace contains no records",
            display_path(&args.trace)
        ));
    }
    if let Err(e) = fs::create_dir_all(&args.out) {
        return fail(&e.into());
    }

    let mut proximity = String::from("k,proximity\n");
    for r in &trace.records {
        proximity.push_str(&format!("{},{}\n", r.k, r.proximity));
    }
    if let Err(e) = fs::write(args.out.join("proximity.csv"), proximity) {
        return fail(&e.into());
    }

    let mut violations = String::from("k");
    for b in &trace.blocks {
        violations.push_str(&format!(",hs_viol_{},pvc_excess_{}", b.name, b.name));
    }
    violations.push('\n');
    for r in &trace.records {
        violations.push_str(&format!("{}", r.k));
        for b in &r.blocks {
            violations.push_str(&format!(",{},{}", b.halfspace_violations, b.pvc_excess));
        }
        violations.push('\n');
    }
    if let Err(e) = fs::write(args.out.join("violations.csv"), violations) {
        return fail(&e.into());
    }

    if let (Some(problem_path), Some(solution_path)) = (&args.problem, &args.solution) {
        let problem = match read_problem(problem_path) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let x = match read_solution(solution_path) {
            Ok(x) => x,
            Err(e) => return fail(&e),
        };
        let blocks = match problem.to_blocks() {
            Ok(b) => b,
            Err(e) => return fail(&e),
        };
        let vector = match Vector::new(x) {
            Ok(v) => v,
            Err(e) => return fail(&e),
        };
        let eval = match evaluate_plan(&vector, &blocks, DEFAULT_CHECK_TOL) {
            Ok(e) => e,
            Err(e) => return fail(&e),
        };
        for block in &eval.blocks {
            let mut table = String::from("threshold,fraction\n");
            for (t, f) in block.dvh.thresholds.iter().zip(&block.dvh.fractions) {
                table.push_str(&format!("{t},{f}\n"));
            }
            let path = args.out.join(format!("dvh_{}.csv", block.name));
            if let Err(e) = fs::write(path, table) {
                return fail(&e.into());
            }
        }
    }
    println!("wrote {}", display_path(&args.out));
    EXIT_OK
}
