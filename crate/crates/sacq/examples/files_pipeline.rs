//! The file-level pipeline behind the `sacq` binary: generate a problem,
//! solve it, verify the solution independently, and render report tables,
//! all through the same functions the CLI dispatches to.
//!
//! ```bash
//! cargo run -p sacq --example files_pipeline
//! ```

use std::fs;

use sacq::cli::{
    cmd_check, cmd_generate, cmd_report, cmd_solve, witness_path, CheckArgs, GenerateArgs,
    GenerateKind, RandomArgs, ReportArgs, SolveArgs,
};

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let problem = dir.path().join("problem.json");

    let code = cmd_generate(&GenerateArgs {
        kind: GenerateKind::RandomFeasible(RandomArgs {
            dimension: 30,
            upper_rows: 40,
            lower_rows: 25,
            upper_alpha: Some(0.25),
            upper_beta: Some(0.15),
            upper_tight: 4,
            ..RandomArgs::default()
        }),
        out: problem.clone(),
        seed: 99,
    });
    assert_eq!(code, 0, "generate failed");

    // The generated witness already satisfies every constraint.
    let code = cmd_check(&CheckArgs {
        problem: problem.clone(),
        solution: witness_path(&problem),
        tol: None,
    });
    assert_eq!(code, 0, "witness check failed");

    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{
  "version": 1,
  "strategy": {"kind": "random_dynamic", "seed": 3},
  "tol": 1e-8,
  "seed": 3
}
"#,
    )
    .expect("write config");

    let run = dir.path().join("run");
    let code = cmd_solve(&SolveArgs {
        problem: problem.clone(),
        config: Some(config),
        out: run.clone(),
        seed: None,
        verbose: false,
    });
    assert_eq!(code, 0, "solve failed");

    let code = cmd_check(&CheckArgs {
        problem: problem.clone(),
        solution: run.join("solution.txt"),
        tol: None,
    });
    assert_eq!(code, 0, "solution check failed");

    let report = dir.path().join("report");
    let code = cmd_report(&ReportArgs {
        trace: run.join("trace.csv"),
        out: report.clone(),
        problem: Some(problem),
        solution: Some(run.join("solution.txt")),
    });
    assert_eq!(code, 0, "report failed");

    println!("\nsummary.json:");
    print!("{}", fs::read_to_string(run.join("summary.json")).unwrap());
    println!("\nfirst trace rows:");
    for line in fs::read_to_string(run.join("trace.csv"))
        .unwrap()
        .lines()
        .take(4)
    {
        println!("  {line}");
    }
    println!("\nreport files:");
    for entry in fs::read_dir(&report).unwrap() {
        println!("  {}", entry.unwrap().file_name().to_string_lossy());
    }
}
