//! Comparing plan strategies on one instance.
//!
//! The same feasibility problem is solved with a single full sweep string
//! (sequential), one singleton string per operator (simultaneous), fresh
//! random partitions every iteration, and a custom two-plan cycle. The
//! proximity trace shows how the string structure shapes convergence.
//!
//! ```bash
//! cargo run -p sacq --example string_strategies
//! ```

use sacq::{
    generate_feasible_instance, solve, translate_problem, BlockDims, IndexVector, InstanceDims,
    Sense, SolveConfig, Status, Strategy, StringPlan,
};

fn main() -> sacq::Result<()> {
    let dims = InstanceDims {
        dimension: 40,
        blocks: vec![
            BlockDims {
                name: "oar".into(),
                rows: 50,
                sense: Sense::UpperLe,
                pvc: None,
                tight_rows: 0,
            },
            BlockDims {
                name: "target".into(),
                rows: 30,
                sense: Sense::LowerGe,
                pvc: None,
                tight_rows: 0,
            },
        ],
    };
    let (blocks, _witness) = generate_feasible_instance(&dims, 17)?;
    let problem = translate_problem(&blocks)?;
    let p = problem.operator_count();
    println!("{} operators over dimension {}", p, problem.dimension());

    // A custom cycle: alternate a full sweep with a two-string split.
    let full = StringPlan::single(IndexVector::new((1..=p).collect())?);
    let halves = StringPlan::new(
        vec![
            IndexVector::new((1..=p / 2).collect())?,
            IndexVector::new((p / 2 + 1..=p).collect())?,
        ],
        vec![0.5, 0.5],
    )?;
    let custom = Strategy::Custom(vec![full, halves]);

    println!("\nstrategy          status    iterations   final proximity");
    for (name, strategy) in [
        ("sequential", Strategy::Sequential),
        ("simultaneous", Strategy::Simultaneous),
        ("random dynamic", Strategy::RandomDynamic { seed: 5 }),
        ("custom cycle", custom),
    ] {
        let config = SolveConfig {
            strategy,
            ..SolveConfig::default()
        };
        let outcome = solve(&problem, &config)?;
        let final_prox = outcome.state.trace.last().map(|r| r.proximity).unwrap_or(f64::NAN);
        println!(
            "{name:<16}  {:<8}  {:>10}   {final_prox:>12.3e}",
            outcome.status.as_str(),
            outcome.state.iteration
        );
        assert_eq!(outcome.status, Status::Solved);
    }

    println!("\nproximity decay under the simultaneous strategy:");
    let outcome = solve(
        &problem,
        &SolveConfig {
            strategy: Strategy::Simultaneous,
            ..SolveConfig::default()
        },
    )?;
    for record in outcome
        .state
        .trace
        .iter()
        .filter(|r| r.k % 25 == 0 || r.k == outcome.state.iteration)
    {
        println!("  k {:>4}: {:.3e}", record.k, record.proximity);
    }
    Ok(())
}
