//! Count-constrained ("percentage violation") sets and their exact
//! projection.
//!
//! A dose vector may exceed its per-row bounds in at most `K` rows. The
//! set of such vectors is non-convex, but the nearest point is computable
//! exactly: keep the `K` largest violations, clip the rest to their
//! bounds.
//!
//! ```bash
//! cargo run -p sacq --example pvc_projection
//! ```

use sacq::{count_violations, is_member, project_pvc, translate_bounds, PvcSet, Sense, Vector};

fn main() -> sacq::Result<()> {
    // Upper bounds with a budget of two violations out of six rows.
    let bounds = Vector::new(vec![1.0, 1.0, 2.0, 0.5, 1.5, 1.0])?;
    let set = PvcSet::new(bounds.clone(), Sense::UpperLe, 2)?;
    let dose = Vector::new(vec![1.8, 0.9, 2.1, 1.4, 1.45, 1.05])?;

    let report = count_violations(&dose, &set)?;
    println!("dose      {:?}", dose.as_slice());
    println!("bounds    {:?}", bounds.as_slice());
    println!(
        "violations: {} rows {:?} by {:?}",
        report.count(),
        report.indices,
        report.magnitudes
    );
    println!("member of the K=2 set? {}", is_member(&dose, &set)?);

    let projected = project_pvc(&dose, &set)?;
    println!("projected {:?}", projected.as_slice());
    println!(
        "distance {:.6}, member now? {}",
        dose.distance(&projected)?,
        is_member(&projected, &set)?
    );

    // Sanity-check optimality against every way of keeping two violations.
    let mags = &report.magnitudes;
    let mut best = f64::INFINITY;
    for a in 0..report.count() {
        for b in (a + 1)..report.count() {
            let cost: f64 = (0..report.count())
                .filter(|&i| i != a && i != b)
                .map(|i| mags[i] * mags[i])
                .sum();
            best = best.min(cost);
        }
    }
    let achieved = dose.distance(&projected)?.powi(2);
    println!("brute-force best squared distance {best:.12}, achieved {achieved:.12}");
    assert!((best - achieved).abs() < 1e-12);

    // The translated half-space side of the same block relaxes the bounds.
    let relaxed = translate_bounds(&bounds, 0.1, Sense::UpperLe)?;
    println!("relaxed bounds (beta = 0.1): {:?}", relaxed.as_slice());
    Ok(())
}
