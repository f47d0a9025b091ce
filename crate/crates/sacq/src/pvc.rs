//! Percentage-violation-constraint sets.
//!
//! A [`PvcSet`] collects the points whose bound violations number at most
//! `K`: for upper bounds `{y : ||(y - b)+||_0 <= K}`, and the mirror image
//! for lower bounds. The set is non-convex, but its special structure
//! admits an exact Euclidean projection: rank the violating components by
//! magnitude, keep the `K` largest untouched, and clip the rest to their
//! bounds.

use crate::error::{Error, Result};
use crate::operators::{check_dims, Sense, Vector};

/// Non-convex set of points violating at most `max_violations` of the
/// stored bounds. Bounds are the *original* (untranslated) ones; the
/// relaxed bounds live in the half-space side of a translated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PvcSet {
    bounds: Vector,
    sense: Sense,
    max_violations: usize,
}

impl PvcSet {
    pub fn new(bounds: Vector, sense: Sense, max_violations: usize) -> Result<Self> {
        if max_violations > bounds.len() {
            return Err(Error::InvalidParameter(format!(
                "violation budget {max_violations} exceeds row count {}",
                bounds.len()
            )));
        }
        Ok(Self {
            bounds,
            sense,
            max_violations,
        })
    }

    pub fn bounds(&self) -> &Vector {
        &self.bounds
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn max_violations(&self) -> usize {
        self.max_violations
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    /// True when every point satisfies the constraint (`K` equals the row
    /// count), making the set the whole space.
    pub fn is_vacuous(&self) -> bool {
        self.max_violations == self.bounds.len()
    }
}

/// Indices and positive magnitudes of bound violations in a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    pub indices: Vec<usize>,
    pub magnitudes: Vec<f64>,
}

impl ViolationReport {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Relaxes bounds for the half-space side of a translated problem:
/// `(1 + beta) b` for upper bounds, `(1 - beta) c` for lower bounds.
pub fn translate_bounds(bounds: &Vector, beta: f64, sense: Sense) -> Result<Vector> {
    if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "bound relaxation fraction must lie in (0, 1), got {beta}"
        )));
    }
    let factor = match sense {
        Sense::UpperLe => 1.0 + beta,
        Sense::LowerGe => 1.0 - beta,
    };
    Ok(Vector::from_raw(
        bounds.iter().map(|b| factor * b).collect(),
    ))
}

/// Reports which components of `y` strictly violate the set's bounds.
/// A component exactly at its bound is not a violation.
pub fn count_violations(y: &Vector, set: &PvcSet) -> Result<ViolationReport> {
    check_dims(set.dimension(), y.len())?;
    let mut indices = Vec::new();
    let mut magnitudes = Vec::new();
    for i in 0..y.len() {
        let mag = match set.sense {
            Sense::UpperLe => y[i] - set.bounds[i],
            Sense::LowerGe => set.bounds[i] - y[i],
        };
        if mag > 0.0 {
            indices.push(i);
            magnitudes.push(mag);
        }
    }
    Ok(ViolationReport { indices, magnitudes })
}

pub fn is_member(y: &Vector, set: &PvcSet) -> Result<bool> {
    Ok(count_violations(y, set)?.count() <= set.max_violations)
}

/// Exact Euclidean projection onto the set.
///
/// Keeps the `max_violations` largest-magnitude violations unchanged and
/// clips every other violating component to its bound; ties in magnitude
/// keep the lower index. Clipping a violation of magnitude `m` costs
/// `m^2`, so retaining the largest magnitudes minimizes the squared
/// distance exactly.
pub fn project_pvc(y: &Vector, set: &PvcSet) -> Result<Vector> {
    let report = count_violations(y, set)?;
    if report.count() <= set.max_violations {
        return Ok(y.clone());
    }
    let mut order: Vec<usize> = (0..report.count()).collect();
    order.sort_unstable_by(|&a, &b| {
        report.magnitudes[b]
            .partial_cmp(&report.magnitudes[a])
            .expect("violation magnitudes are finite")
            .then(report.indices[a].cmp(&report.indices[b]))
    });
    let mut out = y.as_slice().to_vec();
    for &rank in order.iter().skip(set.max_violations) {
        let i = report.indices[rank];
        out[i] = set.bounds[i];
    }
    Ok(Vector::from_raw(out))
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vector(v: &[f64]) -> Vector {
        Vector::new(v.to_vec()).unwrap()
    }

    fn upper_set(bounds: &[f64], k: usize) -> PvcSet {
        PvcSet::new(vector(bounds), Sense::UpperLe, k).unwrap()
    }

    fn lower_set(bounds: &[f64], k: usize) -> PvcSet {
        PvcSet::new(vector(bounds), Sense::LowerGe, k).unwrap()
    }

    #[test]
    fn translate_bounds_examples() {
        let up = translate_bounds(&vector(&[2.0, 4.0]), 0.1, Sense::UpperLe).unwrap();
        assert!((up[0] - 2.2).abs() < 1e-15 && (up[1] - 4.4).abs() < 1e-15);

        let low = translate_bounds(&vector(&[10.0]), 0.25, Sense::LowerGe).unwrap();
        assert!((low[0] - 7.5).abs() < 1e-15);

        let zero = translate_bounds(&vector(&[0.0]), 0.5, Sense::UpperLe).unwrap();
        assert_eq!(zero[0], 0.0);
    }

    #[test]
    fn translate_bounds_rejects_out_of_range() {
        for beta in [0.0, 1.0, -0.2, 1.5] {
            assert!(translate_bounds(&vector(&[1.0]), beta, Sense::UpperLe).is_err());
        }
    }

    #[test]
    fn count_violations_examples() {
        let r = count_violations(&vector(&[3.0, 0.5, 2.0]), &upper_set(&[1.0, 1.0, 1.0], 0))
            .unwrap();
        assert_eq!(r.indices, vec![0, 2]);
        assert!((r.magnitudes[0] - 2.0).abs() < 1e-15);
        assert!((r.magnitudes[1] - 1.0).abs() < 1e-15);

        // Boundary points are not violations.
        let r = count_violations(&vector(&[1.0, 1.0]), &upper_set(&[1.0, 1.0], 0)).unwrap();
        assert_eq!(r.count(), 0);

        let r = count_violations(&vector(&[0.2, 0.9]), &lower_set(&[1.0, 1.0], 0)).unwrap();
        assert_eq!(r.count(), 2);
        assert!((r.magnitudes[0] - 0.8).abs() < 1e-15);
        assert!((r.magnitudes[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn is_member_examples() {
        assert!(is_member(&vector(&[3.0, 0.0, 0.0]), &upper_set(&[1.0, 1.0, 1.0], 1)).unwrap());
        assert!(!is_member(&vector(&[3.0, 3.0, 0.0]), &upper_set(&[1.0, 1.0, 1.0], 1)).unwrap());
        // K equal to the row count admits everything.
        assert!(is_member(&vector(&[9.0, 9.0]), &upper_set(&[0.0, 0.0], 2)).unwrap());
    }

    #[test]
    fn project_pvc_examples() {
        let set = upper_set(&[1.0, 1.0, 1.0], 1);
        let p = project_pvc(&vector(&[3.0, 2.0, 1.5]), &set).unwrap();
        assert_eq!(p, vector(&[3.0, 1.0, 1.0]));

        // Already a member.
        let inside = vector(&[3.0, 0.5, 0.5]);
        assert_eq!(project_pvc(&inside, &set).unwrap(), inside);

        let low = lower_set(&[1.0, 1.0], 1);
        let p = project_pvc(&vector(&[0.2, 0.9]), &low).unwrap();
        assert_eq!(p, vector(&[0.2, 1.0]));
    }

    #[test]
    fn project_pvc_tie_keeps_lower_index() {
        let set = upper_set(&[0.0, 0.0, 0.0], 1);
        let p = project_pvc(&vector(&[2.0, 2.0, 2.0]), &set).unwrap();
        assert_eq!(p, vector(&[2.0, 0.0, 0.0]));
    }

    #[test]
    fn projection_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..2000 {
            let n = rng.gen_range(1..=12);
            let sense = if rng.gen_bool(0.5) {
                Sense::UpperLe
            } else {
                Sense::LowerGe
            };
            let k = rng.gen_range(0..=n);
            // Coarse value grid provokes magnitude ties.
            let grid = trial % 3 == 0;
            let draw = |rng: &mut ChaCha8Rng| {
                if grid {
                    (rng.gen_range(-4..=4) as f64) * 0.5
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            };
            let bounds = Vector::from_raw((0..n).map(|_| draw(&mut rng)).collect());
            let y = Vector::from_raw((0..n).map(|_| draw(&mut rng)).collect());
            let set = PvcSet::new(bounds, sense, k).unwrap();

            let p = project_pvc(&y, &set).unwrap();
            let dist_sq = {
                let d = y.distance(&p).unwrap();
                d * d
            };
            let best = oracle::brute_force_distance_sq(&y, &set);
            assert!(
                (dist_sq - best).abs() <= 1e-12,
                "distance {dist_sq} vs oracle {best}"
            );
            assert!(is_member(&p, &set).unwrap());
            assert_eq!(project_pvc(&p, &set).unwrap(), p);
        }
    }

    #[test]
    fn projection_beats_random_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let set = upper_set(&[1.0, 0.5, -0.5, 2.0, 0.0, 1.5], 2);
        let y = vector(&[2.0, 1.5, 0.7, 4.0, 1.0, 1.6]);
        let p = project_pvc(&y, &set).unwrap();
        let d_proj = y.distance(&p).unwrap();
        let mut tested = 0;
        while tested < 1000 {
            let z = Vector::from_raw((0..6).map(|_| rng.gen_range(-3.0..5.0)).collect());
            if is_member(&z, &set).unwrap() {
                assert!(d_proj <= y.distance(&z).unwrap() + 1e-12);
                tested += 1;
            }
        }
    }

    #[test]
    fn projection_distance_nonincreasing_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let n = rng.gen_range(1..=10);
            let bounds = Vector::from_raw((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let y = Vector::from_raw((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let mut prev = f64::INFINITY;
            for k in 0..=n {
                let set = PvcSet::new(bounds.clone(), Sense::UpperLe, k).unwrap();
                let p = project_pvc(&y, &set).unwrap();
                let d = y.distance(&p).unwrap();
                assert!(d <= prev + 1e-12);
                prev = d;
            }
        }
    }

    #[test]
    fn budget_larger_than_rows_rejected() {
        assert!(PvcSet::new(vector(&[1.0, 2.0]), Sense::UpperLe, 3).is_err());
    }
}
