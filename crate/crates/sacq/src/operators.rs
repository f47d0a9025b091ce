//! Projection and relaxation primitives on Euclidean space.
//!
//! Everything here is built from a handful of pieces: finite vectors,
//! half-space and orthant projections, and an [`OperatorNode`] tree that
//! composes them (together with the count-constrained projections from
//! [`crate::pvc`] and the range-space transport operators from
//! [`crate::landweber`]). Operators are immutable after construction and
//! applying one is a pure function, so trees can be evaluated concurrently
//! on distinct inputs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::landweber::{apply_landweber, LandweberOp};
use crate::pvc::{project_pvc, PvcSet};

/// Absolute tolerance on a constraint residual under which a point is
/// treated as already inside the set. Short-circuiting at this level keeps
/// projections exactly idempotent in floating point.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Tolerance for convex-combination weight normalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A point of Euclidean space with all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Wraps entries that are already known to be finite.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Euclidean distance to another point of the same dimension.
    pub fn distance(&self, other: &Vector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direction of a scalar inequality: `UpperLe` is `value <= bound`,
/// `LowerGe` is `value >= bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    UpperLe,
    LowerGe,
}

/// A closed half-space `{x : <a, x> <= b}` or `{x : <a, x> >= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: Vector,
    bound: f64,
    sense: Sense,
    norm_sq: f64,
}

impl HalfSpace {
    pub fn new(normal: Vector, bound: f64, sense: Sense) -> Result<Self> {
        if !bound.is_finite() {
            return Err(Error::NonFinite);
        }
        let norm_sq = normal.norm_sq();
        if norm_sq == 0.0 {
            return Err(Error::ZeroNormal);
        }
        Ok(Self {
            normal,
            bound,
            sense,
            norm_sq,
        })
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn dimension(&self) -> usize {
        self.normal.len()
    }

    /// Signed constraint residual; positive means the inequality is violated.
    pub fn residual(&self, x: &Vector) -> Result<f64> {
        check_dims(self.dimension(), x.len())?;
        let v = dot(self.normal.as_slice(), x.as_slice());
        Ok(match self.sense {
            Sense::UpperLe => v - self.bound,
            Sense::LowerGe => self.bound - v,
        })
    }

    /// Euclidean distance from `x` to the half-space.
    pub fn distance(&self, x: &Vector) -> Result<f64> {
        Ok(self.residual(x)?.max(0.0) / self.norm_sq.sqrt())
    }

    pub fn contains(&self, x: &Vector) -> Result<bool> {
        Ok(self.residual(x)? <= FEASIBILITY_TOL)
    }
}

/// Nearest point of `x` in the half-space `hs`.
pub fn project_halfspace(hs: &HalfSpace, x: &Vector) -> Result<Vector> {
    let r = hs.residual(x)?;
    if r <= FEASIBILITY_TOL {
        return Ok(x.clone());
    }
    let step = r / hs.norm_sq;
    let a = hs.normal.as_slice();
    let out = match hs.sense {
        Sense::UpperLe => x.iter().zip(a).map(|(xi, ai)| xi - step * ai).collect(),
        Sense::LowerGe => x.iter().zip(a).map(|(xi, ai)| xi + step * ai).collect(),
    };
    Ok(Vector::from_raw(out))
}

/// Component-wise positive part; nearest point in the nonnegative orthant.
/// Signed zeros normalize to +0.0.
pub fn project_orthant(x: &Vector) -> Vector {
    Vector::from_raw(
        x.iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect(),
    )
}

/// Interpolation weight of a relaxed operator, restricted to `[0, 2]`.
/// Values in `[0, 1]` preserve the cutter property of the base operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationParam(f64);

impl RelaxationParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "relaxation parameter must lie in [0, 2], got {lambda}"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A composable fixed-point operator on Euclidean space.
///
/// `Composition` applies right-to-left (the last node in the list acts
/// first, matching function-composition order); `ConvexCombination`
/// evaluates children in listed order and sums in that fixed order, so
/// repeated runs are bit-reproducible.
#[derive(Debug, Clone)]
pub enum OperatorNode {
    Identity,
    HalfSpaceProjector(Arc<HalfSpace>),
    OrthantProjector,
    PvcProjector(Arc<PvcSet>),
    Relaxation(Box<OperatorNode>, RelaxationParam),
    Composition(Vec<OperatorNode>),
    ConvexCombination {
        children: Vec<OperatorNode>,
        weights: Vec<f64>,
    },
    Landweber(Arc<LandweberOp>),
}

impl OperatorNode {
    pub fn halfspace(hs: HalfSpace) -> Self {
        Self::HalfSpaceProjector(Arc::new(hs))
    }

    pub fn pvc(set: PvcSet) -> Self {
        Self::PvcProjector(Arc::new(set))
    }

    pub fn landweber(op: LandweberOp) -> Self {
        Self::Landweber(Arc::new(op))
    }

    /// Wraps `self` as `(1 - lambda) I + lambda self`.
    pub fn relaxed(self, lambda: RelaxationParam) -> Self {
        Self::Relaxation(Box::new(self), lambda)
    }

    /// Right-to-left composition of a nonempty operator list.
    pub fn composition(list: Vec<OperatorNode>) -> Result<Self> {
        if list.is_empty() {
            return Err(Error::InvalidParameter(
                "composition requires at least one operator".into(),
            ));
        }
        Ok(Self::Composition(list))
    }

    /// Convex combination with positive weights summing to one.
    pub fn convex_combination(children: Vec<OperatorNode>, weights: Vec<f64>) -> Result<Self> {
        if children.is_empty() || children.len() != weights.len() {
            return Err(Error::InvalidParameter(
                "convex combination needs matching nonempty children and weights".into(),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::InvalidParameter(
                "convex combination weights must be positive".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "convex combination weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self::ConvexCombination { children, weights })
    }
}

/// Evaluates an operator tree at `x`.
pub fn apply(op: &OperatorNode, x: &Vector) -> Result<Vector> {
    match op {
        OperatorNode::Identity => Ok(x.clone()),
        OperatorNode::HalfSpaceProjector(hs) => project_halfspace(hs, x),
        OperatorNode::OrthantProjector => Ok(project_orthant(x)),
        OperatorNode::PvcProjector(set) => project_pvc(x, set),
        OperatorNode::Relaxation(base, lambda) => relax(base, *lambda, x),
        OperatorNode::Composition(list) => {
            let mut current = x.clone();
            for node in list.iter().rev() {
                current = apply(node, &current)?;
            }
            Ok(current)
        }
        OperatorNode::ConvexCombination { children, weights } => {
            let mut acc = vec![0.0; x.len()];
            for (child, &w) in children.iter().zip(weights) {
                let y = apply(child, x)?;
                check_dims(acc.len(), y.len())?;
                for (a, yi) in acc.iter_mut().zip(y.iter()) {
                    *a += w * yi;
                }
            }
            Ok(Vector::from_raw(acc))
        }
        OperatorNode::Landweber(lw) => apply_landweber(lw, x),
    }
}

/// `(1 - lambda) x + lambda op(x)`.
pub fn relax(op: &OperatorNode, lambda: RelaxationParam, x: &Vector) -> Result<Vector> {
    let y = apply(op, x)?;
    check_dims(x.len(), y.len())?;
    let l = lambda.get();
    Ok(Vector::from_raw(
        x.iter()
            .zip(y.iter())
            .map(|(xi, yi)| (1.0 - l) * xi + l * yi)
            .collect(),
    ))
}

/// `<op(x) - x, op(x) - w>` for a known fixed point `w` of `op`.
/// A nonpositive value certifies the cutter inequality at `(x, w)`.
pub fn cutter_residual(op: &OperatorNode, x: &Vector, w: &Vector) -> Result<f64> {
    check_dims(x.len(), w.len())?;
    let y = apply(op, x)?;
    check_dims(x.len(), y.len())?;
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += (y[i] - x[i]) * (y[i] - w[i]);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::new(vec![a, b]).unwrap()
    }

    fn upper(normal: Vec<f64>, bound: f64) -> HalfSpace {
        HalfSpace::new(Vector::new(normal).unwrap(), bound, Sense::UpperLe).unwrap()
    }

    fn lower(normal: Vec<f64>, bound: f64) -> HalfSpace {
        HalfSpace::new(Vector::new(normal).unwrap(), bound, Sense::LowerGe).unwrap()
    }

    /// Grid-search oracle: over feasible points of a 2-D half-space, no
    /// sampled point may be closer to `x` than the claimed projection.
    fn assert_halfspace_grid_optimal(hs: &HalfSpace, x: &Vector, proj: &Vector) {
        let claimed = x.distance(proj).unwrap();
        let mut best = f64::INFINITY;
        let steps = 600;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = vec2(
                    -3.0 + 6.0 * i as f64 / steps as f64,
                    -3.0 + 6.0 * j as f64 / steps as f64,
                );
                if hs.contains(&p).unwrap() {
                    best = best.min(x.distance(&p).unwrap());
                }
            }
        }
        // Grid resolution is 0.01, so allow that much slack.
        assert!(
            claimed <= best + 0.02,
            "projection distance {claimed} beats grid minimum {best}"
        );
        assert!(hs.contains(proj).unwrap());
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn halfspace_rejects_zero_normal() {
        let err = HalfSpace::new(Vector::zeros(3), 1.0, Sense::UpperLe);
        assert!(matches!(err, Err(Error::ZeroNormal)));
    }

    #[test]
    fn project_halfspace_feasible_point_unchanged() {
        let hs = upper(vec![1.0, 0.0], 1.0);
        let x = vec2(0.5, 0.3);
        assert_eq!(project_halfspace(&hs, &x).unwrap(), x);
    }

    #[test]
    fn project_halfspace_upper_closed_form() {
        let hs = upper(vec![1.0, 0.0], 1.0);
        let x = vec2(2.0, 0.0);
        let p = project_halfspace(&hs, &x).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        assert_halfspace_grid_optimal(&hs, &x, &p);
    }

    #[test]
    fn project_halfspace_lower_closed_form() {
        let hs = lower(vec![1.0, 1.0], 1.0);
        let x = vec2(0.0, 0.0);
        let p = project_halfspace(&hs, &x).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        assert_halfspace_grid_optimal(&hs, &x, &p);
    }

    #[test]
    fn project_halfspace_dimension_mismatch() {
        let hs = upper(vec![1.0, 0.0], 1.0);
        let x = Vector::new(vec![1.0]).unwrap();
        assert!(matches!(
            project_halfspace(&hs, &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn project_orthant_examples() {
        assert_eq!(project_orthant(&vec2(1.0, 2.0)), vec2(1.0, 2.0));
        assert_eq!(project_orthant(&vec2(-1.0, 2.0)), vec2(0.0, 2.0));
        let p = project_orthant(&vec2(0.0, -0.0));
        assert_eq!(p[0].to_bits(), 0.0f64.to_bits());
        assert_eq!(p[1].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn relax_endpoints_and_midpoint() {
        let op = OperatorNode::halfspace(upper(vec![1.0], 1.0));
        let x = Vector::new(vec![3.0]).unwrap();
        let full = relax(&op, RelaxationParam::new(1.0).unwrap(), &x).unwrap();
        assert!((full[0] - 1.0).abs() < 1e-15);
        let none = relax(&op, RelaxationParam::new(0.0).unwrap(), &x).unwrap();
        assert!((none[0] - 3.0).abs() < 1e-15);
        let half = relax(&op, RelaxationParam::new(0.5).unwrap(), &x).unwrap();
        assert!((half[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn relaxation_param_range() {
        assert!(RelaxationParam::new(-0.1).is_err());
        assert!(RelaxationParam::new(2.1).is_err());
        assert!(RelaxationParam::new(2.0).is_ok());
    }

    #[test]
    fn apply_identity_and_composition() {
        let x = vec2(4.0, 5.0);
        assert_eq!(apply(&OperatorNode::Identity, &x).unwrap(), x);

        // Last node applies first: x1 <= 1 clamp, then the orthant.
        let comp = OperatorNode::composition(vec![
            OperatorNode::OrthantProjector,
            OperatorNode::halfspace(upper(vec![1.0, 0.0], 1.0)),
        ])
        .unwrap();
        let y = apply(&comp, &vec2(2.0, -1.0)).unwrap();
        assert_eq!(y, vec2(1.0, 0.0));
    }

    #[test]
    fn apply_convex_combination_of_identities() {
        let op = OperatorNode::convex_combination(
            vec![OperatorNode::Identity, OperatorNode::Identity],
            vec![0.3, 0.7],
        )
        .unwrap();
        let x = Vector::new(vec![2.0]).unwrap();
        let y = apply(&op, &x).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn convex_combination_weight_validation() {
        let kids = || vec![OperatorNode::Identity, OperatorNode::Identity];
        assert!(OperatorNode::convex_combination(kids(), vec![0.5, 0.4]).is_err());
        assert!(OperatorNode::convex_combination(kids(), vec![1.1, -0.1]).is_err());
        assert!(OperatorNode::convex_combination(kids(), vec![0.5, 0.5]).is_ok());
        assert!(OperatorNode::composition(vec![]).is_err());
    }

    #[test]
    fn cutter_residual_examples() {
        let x = vec2(1.0, 2.0);
        let w = vec2(-3.0, 0.5);
        assert_eq!(cutter_residual(&OperatorNode::Identity, &x, &w).unwrap(), 0.0);

        let p = OperatorNode::halfspace(upper(vec![1.0], 1.0));
        let x1 = Vector::new(vec![3.0]).unwrap();
        let w1 = Vector::new(vec![0.0]).unwrap();
        assert!((cutter_residual(&p, &x1, &w1).unwrap() - (-2.0)).abs() < 1e-15);

        let x2 = Vector::new(vec![0.5]).unwrap();
        let w2 = Vector::new(vec![1.0]).unwrap();
        assert_eq!(cutter_residual(&p, &x2, &w2).unwrap(), 0.0);
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
        Vector::from_raw((0..n).map(|_| rng.gen_range(-scale..scale)).collect())
    }

    #[test]
    fn projector_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..8);
            let hs = HalfSpace::new(
                random_vector(&mut rng, n, 2.0),
                rng.gen_range(-2.0..2.0),
                if rng.gen_bool(0.5) {
                    Sense::UpperLe
                } else {
                    Sense::LowerGe
                },
            );
            let hs = match hs {
                Ok(h) => h,
                Err(_) => continue,
            };
            let x = random_vector(&mut rng, n, 5.0);
            let p = project_halfspace(&hs, &x).unwrap();
            let pp = project_halfspace(&hs, &p).unwrap();
            assert!(p.distance(&pp).unwrap() <= 1e-12);

            let q = project_orthant(&x);
            assert!(q.distance(&project_orthant(&q)).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn firm_nonexpansiveness_of_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let n = rng.gen_range(1..6);
            let hs = upper(
                (0..n).map(|_| rng.gen_range(-1.0..1.0f64)).collect(),
                rng.gen_range(-1.0..1.0),
            );
            let x = random_vector(&mut rng, n, 4.0);
            let y = random_vector(&mut rng, n, 4.0);
            for (px, py) in [
                (
                    project_halfspace(&hs, &x).unwrap(),
                    project_halfspace(&hs, &y).unwrap(),
                ),
                (project_orthant(&x), project_orthant(&y)),
            ] {
                let mut inner = 0.0;
                let mut norm_sq = 0.0;
                for i in 0..n {
                    let d = px[i] - py[i];
                    inner += d * (x[i] - y[i]);
                    norm_sq += d * d;
                }
                assert!(inner >= norm_sq - 1e-10);
            }
        }
    }

    #[test]
    fn cutters_stay_cutters_under_relaxation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let n = rng.gen_range(1..6);
            let hs = upper(
                (0..n).map(|_| rng.gen_range(0.1..1.0f64)).collect(),
                rng.gen_range(0.5..2.0),
            );
            // Feasible w: scale a nonnegative point under the bound.
            let w = Vector::from_raw(vec![0.0; n]);
            assert!(hs.contains(&w).unwrap());
            let x = random_vector(&mut rng, n, 4.0);

            let base = OperatorNode::halfspace(hs);
            assert!(cutter_residual(&base, &x, &w).unwrap() <= 1e-10);

            let lambda = RelaxationParam::new(rng.gen_range(0.0..1.0)).unwrap();
            let relaxed = base.relaxed(lambda);
            assert!(cutter_residual(&relaxed, &x, &w).unwrap() <= 1e-10);
        }
    }
}
