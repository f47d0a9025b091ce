//! Command and file-format contract tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sacq::cli::{
    cmd_check, cmd_generate, cmd_report, cmd_solve, read_config, read_problem, read_solution,
    read_trace, witness_path, write_config, write_problem, CheckArgs, ConfigFile, GenerateArgs,
    GenerateKind, LambdaFile, PhantomArgs, PlanFile, ProblemBlock, ProblemFile, RandomArgs,
    ReportArgs, SenseTag, SolveArgs, SparseMatrixFile, StrategyFile, X0Tag,
};
use sacq::translate_problem;

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn tiny_problem() -> ProblemFile {
    ProblemFile {
        version: 1,
        dimension: 2,
        blocks: vec![
            ProblemBlock {
                name: "oar".into(),
                sense: SenseTag::Upper,
                dense: Some(vec![vec![1.0, 0.25], vec![0.5, 1.0]]),
                sparse: None,
                bounds: vec![1.0, 2.0],
                alpha: Some(0.5),
                beta: Some(0.1),
            },
            ProblemBlock {
                name: "target".into(),
                sense: SenseTag::Lower,
                dense: None,
                sparse: Some(SparseMatrixFile {
                    rows: 2,
                    triplets: vec![(0, 0, 0.125), (0, 1, 1.0), (1, 0, 1.0)],
                }),
                bounds: vec![0.25, 0.5],
                alpha: None,
                beta: None,
            },
        ],
    }
}

fn generate_feasible(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let out = dir.join("problem.json");
    let code = cmd_generate(&GenerateArgs {
        kind: GenerateKind::RandomFeasible(RandomArgs {
            dimension: 20,
            upper_rows: 25,
            lower_rows: 15,
            upper_alpha: Some(0.3),
            upper_beta: Some(0.1),
            upper_tight: 3,
            ..RandomArgs::default()
        }),
        out: out.clone(),
        seed,
    });
    assert_eq!(code, 0);
    (out.clone(), witness_path(&out))
}

#[test]
fn problem_and_config_files_round_trip_exactly() {
    let dir = tempdir();
    let problem = tiny_problem();
    let path = dir.path().join("p.json");
    write_problem(&path, &problem).unwrap();
    assert_eq!(read_problem(&path).unwrap(), problem);

    let config = ConfigFile {
        strategy: StrategyFile::Custom {
            schedule: vec![PlanFile {
                strings: vec![vec![1, 2], vec![3]],
                weights: vec![0.625, 0.375],
            }],
        },
        delta: Some(0.017),
        q_bar: Some(9),
        lambda: LambdaFile::Adaptive {
            initial: 1.0,
            factor: 0.9,
            floor: 0.05,
            grow_stacked: true,
            max_stacked: 3,
        },
        tol: 3.5e-7,
        seed: 42,
        x0: X0Tag::Random,
        ..ConfigFile::default()
    };
    let cpath = dir.path().join("c.json");
    write_config(&cpath, &config).unwrap();
    assert_eq!(read_config(&cpath).unwrap(), config);
}

#[test]
fn unknown_fields_are_rejected_by_name() {
    let dir = tempdir();
    let path = dir.path().join("p.json");
    fs::write(
        &path,
        r#"{"version":1,"dimension":1,"blocks":[],"surprise":true}"#,
    )
    .unwrap();
    let err = read_problem(&path).unwrap_err().to_string();
    assert!(err.contains("surprise"), "message was: {err}");

    fs::write(
        &path,
        r#"{"version":1,"dimension":1,"blocks":[{"name":"a","sense":"upper","dense":[[1.0]],"bounds":[1.0],"extra":2}]}"#,
    )
    .unwrap();
    let err = read_problem(&path).unwrap_err().to_string();
    assert!(err.contains("extra"), "message was: {err}");
}

#[test]
fn problem_validation_catches_bad_documents() {
    let mut bad_version = tiny_problem();
    bad_version.version = 2;
    assert!(bad_version.to_blocks().is_err());

    let mut bad_name = tiny_problem();
    bad_name.blocks[0].name = "o a r".into();
    assert!(bad_name.to_blocks().is_err());

    let mut duplicate = tiny_problem();
    duplicate.blocks[1].name = "oar".into();
    assert!(duplicate.to_blocks().is_err());

    let mut both_storages = tiny_problem();
    both_storages.blocks[0].sparse = Some(SparseMatrixFile {
        rows: 2,
        triplets: vec![],
    });
    assert!(both_storages.to_blocks().is_err());

    let mut alpha_only = tiny_problem();
    alpha_only.blocks[0].beta = None;
    assert!(alpha_only.to_blocks().is_err());

    let mut oversized = tiny_problem();
    oversized.dimension = 1001;
    oversized.blocks[0].dense = Some(vec![vec![0.0; 1001]; 1000]);
    oversized.blocks[0].bounds = vec![1.0; 1000];
    let err = oversized.to_blocks().unwrap_err().to_string();
    assert!(err.contains("sparse"), "message was: {err}");
}

#[test]
fn generated_phantom_is_a_valid_problem() {
    let dir = tempdir();
    let out = dir.path().join("phantom.json");
    let code = cmd_generate(&GenerateArgs {
        kind: GenerateKind::Phantom(PhantomArgs {
            target_alpha: Some(0.2),
            target_beta: Some(0.1),
            ..PhantomArgs::default()
        }),
        out: out.clone(),
        seed: 1,
    });
    assert_eq!(code, 0);
    let file = read_problem(&out).unwrap();
    let blocks = file.to_blocks().unwrap();
    translate_problem(&blocks).unwrap();

    // The zero vector parses and checks cleanly (exit 0 or 1, never 2):
    // target lower bounds make it infeasible.
    let zero = dir.path().join("zero.txt");
    fs::write(&zero, "0\n".repeat(file.dimension)).unwrap();
    let code = cmd_check(&CheckArgs {
        problem: out,
        solution: zero,
        tol: None,
    });
    assert_eq!(code, 1);
}

#[test]
fn generated_witness_passes_check() {
    let dir = tempdir();
    let (problem, witness) = generate_feasible(dir.path(), 7);
    let code = cmd_check(&CheckArgs {
        problem,
        solution: witness,
        tol: None,
    });
    assert_eq!(code, 0);
}

#[test]
fn negative_generate_parameters_exit_2() {
    let dir = tempdir();
    let code = cmd_generate(&GenerateArgs {
        kind: GenerateKind::Phantom(PhantomArgs {
            grid_x: -16,
            ..PhantomArgs::default()
        }),
        out: dir.path().join("p.json"),
        seed: 0,
    });
    assert_eq!(code, 2);

    let code = cmd_generate(&GenerateArgs {
        kind: GenerateKind::RandomFeasible(RandomArgs {
            dimension: 0,
            ..RandomArgs::default()
        }),
        out: dir.path().join("p.json"),
        seed: 0,
    });
    assert_eq!(code, 2);
}

#[test]
fn solve_feasible_writes_outputs_and_passes_check() {
    let dir = tempdir();
    let (problem, _) = generate_feasible(dir.path(), 3);
    let out = dir.path().join("run");
    let code = cmd_solve(&SolveArgs {
        problem: problem.clone(),
        config: None,
        out: out.clone(),
        seed: None,
        verbose: false,
    });
    assert_eq!(code, 0);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "Solved");

    let code = cmd_check(&CheckArgs {
        problem,
        solution: out.join("solution.txt"),
        tol: None,
    });
    assert_eq!(code, 0);

    // Trace rows match the recorded iterations (k = 0..=iterations).
    let trace = read_trace(&out.join("trace.csv")).unwrap();
    let iterations = summary["iterations"].as_u64().unwrap() as usize;
    assert_eq!(trace.records.len(), iterations + 1);
}

#[test]
fn solve_infeasible_toy_exits_1() {
    let dir = tempdir();
    let path = dir.path().join("infeasible.json");
    write_problem(
        &path,
        &ProblemFile {
            version: 1,
            dimension: 1,
            blocks: vec![
                ProblemBlock {
                    name: "low".into(),
                    sense: SenseTag::Upper,
                    dense: Some(vec![vec![1.0]]),
                    sparse: None,
                    bounds: vec![0.0],
                    alpha: None,
                    beta: None,
                },
                ProblemBlock {
                    name: "high".into(),
                    sense: SenseTag::Lower,
                    dense: Some(vec![vec![1.0]]),
                    sparse: None,
                    bounds: vec![1.0],
                    alpha: None,
                    beta: None,
                },
            ],
        },
    )
    .unwrap();
    let code = cmd_solve(&SolveArgs {
        problem: path,
        config: None,
        out: dir.path().join("run"),
        seed: None,
        verbose: false,
    });
    assert_eq!(code, 1);
}

#[test]
fn config_with_delta_out_of_range_exits_2() {
    let dir = tempdir();
    let (problem, _) = generate_feasible(dir.path(), 5);
    let config = dir.path().join("config.json");
    // Any delta >= 1/p is inadmissible; 0.5 dwarfs 1/p for this problem.
    fs::write(&config, r#"{"version":1,"delta":0.5}"#).unwrap();
    let code = cmd_solve(&SolveArgs {
        problem,
        config: Some(config),
        out: dir.path().join("run"),
        seed: None,
        verbose: false,
    });
    assert_eq!(code, 2);
}

#[test]
fn check_rejects_malformed_solutions() {
    let dir = tempdir();
    let (problem, witness) = generate_feasible(dir.path(), 11);

    let truncated = dir.path().join("truncated.txt");
    let full = fs::read_to_string(&witness).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    fs::write(&truncated, lines[..lines.len() / 2].join("\n")).unwrap();
    let code = cmd_check(&CheckArgs {
        problem: problem.clone(),
        solution: truncated,
        tol: None,
    });
    assert_eq!(code, 2);

    let garbage = dir.path().join("garbage.txt");
    fs::write(&garbage, "1.0\nnot-a-number\n").unwrap();
    let code = cmd_check(&CheckArgs {
        problem,
        solution: garbage,
        tol: None,
    });
    assert_eq!(code, 2);
}

#[test]
fn report_tables_cover_every_trace_record() {
    let dir = tempdir();
    let (problem, _) = generate_feasible(dir.path(), 13);
    let run = dir.path().join("run");
    // Simultaneous iterations give a multi-row trace.
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"version":1,"strategy":{"kind":"simultaneous"}}"#).unwrap();
    assert_eq!(
        cmd_solve(&SolveArgs {
            problem: problem.clone(),
            config: Some(config),
            out: run.clone(),
            seed: None,
            verbose: false,
        }),
        0
    );
    let trace = read_trace(&run.join("trace.csv")).unwrap();

    let report = dir.path().join("report");
    let code = cmd_report(&ReportArgs {
        trace: run.join("trace.csv"),
        out: report.clone(),
        problem: Some(problem),
        solution: Some(run.join("solution.txt")),
    });
    assert_eq!(code, 0);

    let proximity = fs::read_to_string(report.join("proximity.csv")).unwrap();
    assert_eq!(proximity.lines().count(), trace.records.len() + 1);
    let violations = fs::read_to_string(report.join("violations.csv")).unwrap();
    assert_eq!(violations.lines().count(), trace.records.len() + 1);

    // Fejer-monotone convex run: proximity is non-increasing.
    let mut prev = f64::INFINITY;
    for line in proximity.lines().skip(1) {
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(value <= prev + 1e-12);
        prev = value;
    }

    for name in ["oar", "target"] {
        let dvh = fs::read_to_string(report.join(format!("dvh_{name}.csv"))).unwrap();
        let mut prev = f64::INFINITY;
        for line in dvh.lines().skip(1) {
            let frac: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(frac <= prev + 1e-15);
            prev = frac;
        }
    }
}

#[test]
fn report_rejects_empty_or_malformed_traces() {
    let dir = tempdir();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(
        cmd_report(&ReportArgs {
            trace: empty,
            out: dir.path().join("rep"),
            problem: None,
            solution: None,
        }),
        2
    );

    // A header without records is still an empty trace.
    let header_only = dir.path().join("header.csv");
    fs::write(&header_only, "k,proximity\n").unwrap();
    assert_eq!(
        cmd_report(&ReportArgs {
            trace: header_only,
            out: dir.path().join("rep"),
            problem: None,
            solution: None,
        }),
        2
    );

    let mangled = dir.path().join("mangled.csv");
    fs::write(&mangled, "k,proximity,hs_viol_a\n0,1.0,2\n").unwrap();
    assert_eq!(
        cmd_report(&ReportArgs {
            trace: mangled,
            out: dir.path().join("rep"),
            problem: None,
            solution: None,
        }),
        2
    );
}

#[test]
fn unwritable_output_exits_3() {
    let code = cmd_generate(&GenerateArgs {
        kind: GenerateKind::RandomFeasible(RandomArgs::default()),
        out: PathBuf::from("/nonexistent-dir-sacq/problem.json"),
        seed: 0,
    });
    assert_eq!(code, 3);
}

#[test]
fn solution_files_reject_non_finite_entries() {
    let dir = tempdir();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "1.0\nNaN\n").unwrap();
    assert!(read_solution(&path).is_err());
}

#[test]
fn binary_runs_the_full_pipeline() {
    let dir = tempdir();
    let bin = env!("CARGO_BIN_EXE_sacq");
    let problem = dir.path().join("problem.json");

    let status = Command::new(bin)
        .args([
            "generate",
            "random-feasible",
            "--dimension",
            "15",
            "--upper-rows",
            "20",
            "--lower-rows",
            "10",
            "--out",
        ])
        .arg(&problem)
        .args(["--seed", "21"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let run = dir.path().join("run");
    let status = Command::new(bin)
        .args(["solve", "--problem"])
        .arg(&problem)
        .args(["--out"])
        .arg(&run)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let status = Command::new(bin)
        .args(["check", "--problem"])
        .arg(&problem)
        .args(["--solution"])
        .arg(run.join("solution.txt"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let status = Command::new(bin)
        .args(["report", "--trace"])
        .arg(run.join("trace.csv"))
        .args(["--out"])
        .arg(dir.path().join("report"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}
