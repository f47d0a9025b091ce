//! Treatment-planning pipeline on a synthetic phantom.
//!
//! A 16x16 grid with a central target disk and a surrounding avoidance
//! annulus is irradiated by 24 beamlets. The target carries lower dose
//! bounds, the annulus upper bounds; both get percentage-violation
//! constraints. The adaptive solve shrinks a block's relaxation whenever
//! its count-constraint excess dominates its half-space violations. The
//! resulting plan is evaluated block by block, including DVH curves.
//!
//! ```bash
//! cargo run -p sacq --example rttp_phantom
//! ```

use sacq::{
    evaluate_plan, generate_phantom, solve, translate_problem, LambdaSchedule, PhantomConfig,
    PvcParams, SolveConfig, Strategy, DEFAULT_CHECK_TOL,
};

fn main() -> sacq::Result<()> {
    let config = PhantomConfig {
        grid: (16, 16),
        target_pvc: Some(PvcParams::new(0.2, 0.1)?),
        oar_pvc: Some(PvcParams::new(0.3, 0.1)?),
        ..PhantomConfig::default()
    };
    let (blocks, geometry) = generate_phantom(&config, 42)?;
    println!(
        "phantom: {}x{} grid, {} beamlets",
        geometry.nx,
        geometry.ny,
        geometry.rays.len()
    );
    for s in &geometry.structures {
        println!("  structure {:<7} {} voxels", s.name, s.voxels.len());
    }

    let problem = translate_problem(&blocks)?;
    println!(
        "translated: {} half-spaces, {} range operators, {} operators total",
        problem.halfspace_count(),
        problem.landweber_count(),
        problem.operator_count()
    );

    let solve_config = SolveConfig {
        strategy: Strategy::RandomDynamic { seed: 7 },
        lambda: LambdaSchedule::Adaptive {
            initial: 1.0,
            factor: 0.9,
            floor: 0.1,
            grow_stacked: false,
            max_stacked: 4,
        },
        seed: 7,
        ..SolveConfig::default()
    };
    let outcome = solve(&problem, &solve_config)?;
    let last = outcome.state.trace.last().unwrap();
    println!(
        "\nsolve: {} after {} iterations, proximity {:.3e}",
        outcome.status.as_str(),
        outcome.state.iteration,
        last.proximity
    );
    for (name, bt) in problem.block_names().iter().zip(&last.blocks) {
        println!(
            "  block {name:<7} lambda {:.3}{}",
            bt.lambda,
            bt.gamma
                .map(|g| format!(", gamma {g:.5}"))
                .unwrap_or_default()
        );
    }

    let eval = evaluate_plan(&outcome.solution, &blocks, DEFAULT_CHECK_TOL)?;
    println!("\nplan evaluation (proximity {:.3e}):", eval.proximity);
    for block in &eval.blocks {
        println!(
            "  {:<7} relaxed violations {}, original {} (allowed {:?}), count constraint {}",
            block.name,
            block.bound_violations,
            block.original_violations,
            block.allowed_violations,
            if block.pvc_satisfied { "ok" } else { "violated" }
        );
    }

    println!("\ntarget DVH (fraction of voxels at or above dose):");
    let dvh = &eval.blocks[0].dvh;
    for (t, f) in dvh.thresholds.iter().zip(&dvh.fractions).step_by(5) {
        let bar = "#".repeat((f * 40.0).round() as usize);
        println!("  {t:>7.3}  {f:>5.2}  {bar}");
    }
    Ok(())
}
