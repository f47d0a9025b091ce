//! Thin command-line front end; all logic lives in [`sacq::cli`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sacq::cli::{
    cmd_check, cmd_generate, cmd_report, cmd_solve, CheckArgs, GenerateArgs, GenerateKind,
    PhantomArgs, RandomArgs, ReportArgs, SolveArgs,
};

#[derive(Parser)]
#[command(
    name = "sacq",
    version,
    about = "String-averaging CQ feasibility solver for split problems with \
             percentage-violation constraints",
    after_help = "Thread count: set SACQ_THREADS (or RAYON_NUM_THREADS) to limit \
                  string-level parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic problem file.
    Generate {
        #[command(subcommand)]
        kind: GenerateCommand,
    },
    /// Solve a problem file and write solution, trace and summary.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        /// Solver configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for solution.txt, trace.csv, summary.json.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        verbose: bool,
    },
    /// Verify a solution against a problem file (independent of the solver).
    Check {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Per-row feasibility tolerance in distance units.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Turn a trace into plot-ready tables (plus DVH tables when the
    /// problem and solution are given).
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long)]
        solution: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenerateCommand {
    /// Two-structure grid phantom (target disk plus avoidance annulus).
    Phantom {
        #[command(flatten)]
        params: PhantomCli,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Random dense instance, feasible by construction, with a witness file.
    RandomFeasible {
        #[command(flatten)]
        params: RandomCli,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PhantomCli {
    /// Grid width and height in voxels.
    #[arg(long, num_args = 2, value_names = ["NX", "NY"], default_values_t = [16, 16])]
    grid: Vec<i64>,
    #[arg(long, default_value_t = 6)]
    beams: i64,
    #[arg(long, default_value_t = 4)]
    beamlets: i64,
    #[arg(long, default_value_t = 1.5)]
    kernel_width: f64,
    #[arg(long, default_value_t = 3.0)]
    target_radius: f64,
    #[arg(long, default_value_t = 6.0)]
    oar_radius: f64,
    #[arg(long)]
    target_alpha: Option<f64>,
    #[arg(long)]
    target_beta: Option<f64>,
    #[arg(long)]
    oar_alpha: Option<f64>,
    #[arg(long)]
    oar_beta: Option<f64>,
    /// Relative slack of the witness-derived prescriptions.
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    /// Fraction of each violation budget forced tight at the witness.
    #[arg(long, default_value_t = 0.5)]
    tight_fraction: f64,
}

#[derive(Args)]
struct RandomCli {
    #[arg(long, default_value_t = 50)]
    dimension: i64,
    #[arg(long, default_value_t = 60)]
    upper_rows: i64,
    #[arg(long, default_value_t = 40)]
    lower_rows: i64,
    #[arg(long)]
    upper_alpha: Option<f64>,
    #[arg(long)]
    upper_beta: Option<f64>,
    #[arg(long)]
    lower_alpha: Option<f64>,
    #[arg(long)]
    lower_beta: Option<f64>,
    /// Rows forced to violate their original bound at the witness.
    #[arg(long, default_value_t = 0)]
    upper_tight: i64,
    #[arg(long, default_value_t = 0)]
    lower_tight: i64,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SACQ_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Generate { kind } => {
            let args = match kind {
                GenerateCommand::Phantom { params, out, seed } => GenerateArgs {
                    kind: GenerateKind::Phantom(PhantomArgs {
                        grid_x: params.grid[0],
                        grid_y: params.grid[1],
                        beams: params.beams,
                        beamlets: params.beamlets,
                        kernel_width: params.kernel_width,
                        target_radius: params.target_radius,
                        oar_radius: params.oar_radius,
                        target_alpha: params.target_alpha,
                        target_beta: params.target_beta,
                        oar_alpha: params.oar_alpha,
                        oar_beta: params.oar_beta,
                        margin: params.margin,
                        tight_fraction: params.tight_fraction,
                    }),
                    out,
                    seed,
                },
                GenerateCommand::RandomFeasible { params, out, seed } => GenerateArgs {
                    kind: GenerateKind::RandomFeasible(RandomArgs {
                        dimension: params.dimension,
                        upper_rows: params.upper_rows,
                        lower_rows: params.lower_rows,
                        upper_alpha: params.upper_alpha,
                        upper_beta: params.upper_beta,
                        lower_alpha: params.lower_alpha,
                        lower_beta: params.lower_beta,
                        upper_tight: params.upper_tight,
                        lower_tight: params.lower_tight,
                    }),
                    out,
                    seed,
                },
            };
            cmd_generate(&args)
        }
        Command::Solve {
            problem,
            config,
            out,
            seed,
            verbose,
        } => cmd_solve(&SolveArgs {
            problem,
            config,
            out,
            seed,
            verbose,
        }),
        Command::Check {
            problem,
            solution,
            tol,
        } => cmd_check(&CheckArgs {
            problem,
            solution,
            tol,
        }),
        Command::Report {
            trace,
            out,
            problem,
            solution,
        } => cmd_report(&ReportArgs {
            trace,
            out,
            problem,
            solution,
        }),
    };
    ExitCode::from(code as u8)
}
