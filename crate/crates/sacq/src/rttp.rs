//! Treatment-planning application layer: block-structured problems, their
//! translation into a split problem, synthetic instance generators, and
//! plan evaluation.
//!
//! A block is one anatomical structure: its dose map rows, one bound per
//! row, a sense (upper bounds for avoidance structures, lower bounds for
//! targets), and optionally a percentage-violation constraint `(alpha,
//! beta)` allowing up to `floor(alpha * rows)` bounds to be exceeded by up
//! to a fraction `beta` each. Translation turns every row into a
//! half-space with the relaxed bound, every constrained block into a
//! Landweber operator over the count-constrained set on the *original*
//! bounds, and appends the nonnegative orthant as a standalone domain
//! operator.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::landweber::{splitmix64, LandweberOp, LinearMap};
use crate::operators::{HalfSpace, OperatorNode, RelaxationParam, Sense, Vector, FEASIBILITY_TOL};
use crate::pvc::{count_violations, project_pvc, translate_bounds, PvcSet};
use crate::string_averaging::BlockTrace;

/// Default per-row feasibility tolerance used when verifying solutions,
/// in units of Euclidean distance to the half-space. Matches the default
/// solver proximity tolerance of 1e-6, which caps each squared row
/// distance at 1e-6.
pub const DEFAULT_CHECK_TOL: f64 = 1e-3;

/// Percentage-violation parameters of one block: up to a fraction `alpha`
/// of the rows may exceed their bounds, each by up to a fraction `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvcParams {
    pub alpha: f64,
    pub beta: f64,
}

impl PvcParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// Violation budget `floor(alpha * rows)`. The epsilon guards against
/// products like 0.7 * 10 rounding just below the integer.
pub fn violation_budget(alpha: f64, rows: usize) -> usize {
    ((alpha * rows as f64 + 1e-9).floor() as usize).min(rows)
}

/// One constraint block: a dose map, per-row bounds, a sense, and an
/// optional percentage-violation constraint.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub name: String,
    pub map: Arc<LinearMap>,
    pub sense: Sense,
    pub bounds: Vector,
    pub pvc: Option<PvcParams>,
}

impl BlockSpec {
    pub fn new(
        name: impl Into<String>,
        map: Arc<LinearMap>,
        sense: Sense,
        bounds: Vector,
        pvc: Option<PvcParams>,
    ) -> Result<Self> {
        if bounds.len() != map.rows() {
            return Err(Error::DimensionMismatch {
                expected: map.rows(),
                found: bounds.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            map,
            sense,
            bounds,
            pvc,
        })
    }

    pub fn rows(&self) -> usize {
        self.map.rows()
    }
}

#[derive(Debug)]
struct TranslatedPvc {
    set: Arc<PvcSet>,
    norm_sq_upper: f64,
}

#[derive(Debug)]
struct TranslatedBlock {
    name: String,
    map: Arc<LinearMap>,
    halfspaces: Vec<Arc<HalfSpace>>,
    pvc: Option<TranslatedPvc>,
}

/// Per-iteration operator parameters: one relaxation per block, the
/// fraction of each admissible Landweber step interval to use, and the
/// stacked projection count for the range-side targets.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationParams {
    pub lambdas: Vec<f64>,
    pub gamma_scale: f64,
    pub stacked: usize,
}

/// Strict per-block violation counts at an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockCounts {
    /// Rows whose relaxed bound is violated (beyond the feasibility
    /// tolerance).
    pub halfspace_violations: usize,
    /// Original-bound violations beyond the allowed count; zero for
    /// blocks without a count constraint.
    pub pvc_excess: usize,
}

/// A block problem translated into operators: one half-space per row
/// (relaxed bounds), one Landweber operator per constrained block
/// (original bounds), and the nonnegative orthant.
///
/// Operator indices run over the Landweber operators first (in block
/// order), then every half-space (block by block, row by row), then the
/// orthant last, so a sequential sweep moves dose-side first and ends
/// inside the orthant.
#[derive(Debug)]
pub struct SplitProblem {
    dimension: usize,
    blocks: Vec<TranslatedBlock>,
}

/// Builds a [`SplitProblem`] from block specifications.
///
/// Rows with zero normals are rejected: a zero row with a finite bound is
/// either vacuous or infeasible and signals bad input. A constraint with
/// `alpha = 1` admits every point, so such blocks contribute no Landweber
/// operator and behave exactly like unconstrained ones.
pub fn translate_problem(blocks: &[BlockSpec]) -> Result<SplitProblem> {
    let first = blocks.first().ok_or_else(|| {
        Error::InvalidParameter("a problem needs at least one block".into())
    })?;
    let dimension = first.map.cols();
    let mut translated = Vec::with_capacity(blocks.len());
    for block in blocks {
        if block.map.cols() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: block.map.cols(),
            });
        }
        let relaxed_bounds = match block.pvc {
            Some(p) => translate_bounds(&block.bounds, p.beta, block.sense)?,
            None => block.bounds.clone(),
        };
        let mut halfspaces = Vec::with_capacity(block.rows());
        for i in 0..block.rows() {
            let hs = HalfSpace::new(block.map.row_dense(i), relaxed_bounds[i], block.sense)
                .map_err(|e| match e {
                    Error::ZeroNormal => Error::InvalidParameter(format!(
                        "block '{}' row {i} is zero",
                        block.name
                    )),
                    other => other,
                })?;
            halfspaces.push(Arc::new(hs));
        }
        let pvc = match block.pvc {
            Some(p) => {
                let k = violation_budget(p.alpha, block.rows());
                if k >= block.rows() {
                    None // vacuous constraint: the set is the whole space
                } else {
                    let set = PvcSet::new(block.bounds.clone(), block.sense, k)?;
                    Some(TranslatedPvc {
                        set: Arc::new(set),
                        norm_sq_upper: block.map.norm_sq_upper()?,
                    })
                }
            }
            None => None,
        };
        translated.push(TranslatedBlock {
            name: block.name.clone(),
            map: block.map.clone(),
            halfspaces,
            pvc,
        });
    }
    Ok(SplitProblem {
        dimension,
        blocks: translated,
    })
}

impl SplitProblem {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_names(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.name.as_str()).collect()
    }

    pub fn halfspace_count(&self) -> usize {
        self.blocks.iter().map(|b| b.halfspaces.len()).sum()
    }

    pub fn landweber_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.pvc.is_some()).count()
    }

    /// Total operator count: Landweber operators, then half-spaces, then
    /// the orthant.
    pub fn operator_count(&self) -> usize {
        self.landweber_count() + self.halfspace_count() + 1
    }

    /// Violation budgets of the constrained blocks, in block order.
    pub fn pvc_budgets(&self) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .enumerate()
            .filter_map(|(l, b)| b.pvc.as_ref().map(|p| (l, p.set.max_violations())))
            .collect()
    }

    /// Assembles the operator list for one iteration's parameters.
    pub fn build_ops(&self, params: &IterationParams) -> Result<Vec<OperatorNode>> {
        if params.lambdas.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                expected: self.blocks.len(),
                found: params.lambdas.len(),
            });
        }
        if params.stacked == 0 {
            return Err(Error::InvalidParameter(
                "stacked projection count must be at least 1".into(),
            ));
        }
        let mut ops = Vec::with_capacity(self.operator_count());
        for block in &self.blocks {
            let Some(pvc) = &block.pvc else { continue };
            let projector = OperatorNode::PvcProjector(pvc.set.clone());
            let target = if params.stacked == 1 {
                projector
            } else {
                OperatorNode::composition(vec![projector; params.stacked])?
            };
            let gamma = params.gamma_scale / pvc.norm_sq_upper;
            ops.push(OperatorNode::landweber(LandweberOp::new(
                block.map.clone(),
                target,
                gamma,
            )?));
        }
        for (l, block) in self.blocks.iter().enumerate() {
            let lambda = params.lambdas[l];
            for hs in &block.halfspaces {
                let node = OperatorNode::HalfSpaceProjector(hs.clone());
                ops.push(if lambda == 1.0 {
                    node
                } else {
                    node.relaxed(RelaxationParam::new(lambda)?)
                });
            }
        }
        ops.push(OperatorNode::OrthantProjector);
        Ok(ops)
    }

    /// Sum of squared distances of `x` to every half-space and to the
    /// orthant, plus squared distances of each block image to its
    /// count-constrained set. Zero exactly at solutions.
    pub fn proximity(&self, x: &Vector) -> Result<f64> {
        let mut total = 0.0;
        for block in &self.blocks {
            for hs in &block.halfspaces {
                let d = hs.distance(x)?;
                total += d * d;
            }
            if let Some(pvc) = &block.pvc {
                let ax = block.map.apply(x)?;
                let proj = project_pvc(&ax, &pvc.set)?;
                let d = ax.distance(&proj)?;
                total += d * d;
            }
        }
        total += x.iter().map(|&v| if v < 0.0 { v * v } else { 0.0 }).sum::<f64>();
        Ok(total)
    }

    /// Strict violation counts per block (for traces and the adaptive
    /// rule).
    pub fn violation_counts(&self, x: &Vector) -> Result<Vec<BlockCounts>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let mut halfspace_violations = 0;
            for hs in &block.halfspaces {
                if hs.residual(x)? > FEASIBILITY_TOL {
                    halfspace_violations += 1;
                }
            }
            let pvc_excess = match &block.pvc {
                Some(pvc) => {
                    let ax = block.map.apply(x)?;
                    count_violations(&ax, &pvc.set)?
                        .count()
                        .saturating_sub(pvc.set.max_violations())
                }
                None => 0,
            };
            out.push(BlockCounts {
                halfspace_violations,
                pvc_excess,
            });
        }
        Ok(out)
    }

    /// Per-block trace entries for the given counts and parameters.
    pub fn block_trace(&self, counts: &[BlockCounts], params: &IterationParams) -> Vec<BlockTrace> {
        self.blocks
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(l, (block, c))| BlockTrace {
                halfspace_violations: c.halfspace_violations,
                pvc_excess: c.pvc_excess,
                lambda: params.lambdas[l],
                gamma: block
                    .pvc
                    .as_ref()
                    .map(|p| params.gamma_scale / p.norm_sq_upper),
            })
            .collect()
    }
}

/// Cumulative dose-volume histogram: for each threshold, the fraction of
/// components at or above it.
#[derive(Debug, Clone, PartialEq)]
pub struct DvhCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Computes the cumulative DVH of a nonnegative dose vector over the
/// given thresholds (sorted ascending in the output).
pub fn compute_dvh(dose: &Vector, thresholds: &Vector) -> Result<DvhCurve> {
    if dose.iter().any(|&d| d < 0.0) {
        return Err(Error::InvalidParameter(
            "dose entries must be nonnegative".into(),
        ));
    }
    let mut ts: Vec<f64> = thresholds.as_slice().to_vec();
    ts.sort_unstable_by(|a, b| a.partial_cmp(b).expect("thresholds are finite"));
    let n = dose.len();
    let fractions = ts
        .iter()
        .map(|&t| {
            if n == 0 {
                0.0
            } else {
                dose.iter().filter(|&&d| d >= t).count() as f64 / n as f64
            }
        })
        .collect();
    Ok(DvhCurve {
        thresholds: ts,
        fractions,
    })
}

/// Evaluation of one block at a candidate solution.
#[derive(Debug, Clone)]
pub struct BlockEval {
    pub name: String,
    /// Rows violating the relaxed bound beyond the check tolerance.
    pub bound_violations: usize,
    /// Rows violating the original bound beyond the check tolerance.
    pub original_violations: usize,
    /// Allowed original-bound violations, when a count constraint exists.
    pub allowed_violations: Option<usize>,
    /// True when the count constraint holds (vacuously true without one).
    pub pvc_satisfied: bool,
    pub dvh: DvhCurve,
}

/// Per-block evaluation plus the global proximity value.
#[derive(Debug, Clone)]
pub struct PlanEval {
    pub blocks: Vec<BlockEval>,
    pub proximity: f64,
}

fn row_norms(map: &LinearMap) -> Vec<f64> {
    (0..map.rows()).map(|i| map.row_dense(i).norm()).collect()
}

fn signed_residual(value: f64, bound: f64, sense: Sense) -> f64 {
    match sense {
        Sense::UpperLe => value - bound,
        Sense::LowerGe => bound - value,
    }
}

/// Evaluates a candidate solution against the blocks directly: violation
/// counts against relaxed and original bounds (with a per-row tolerance
/// of `check_tol` in distance units), count-constraint flags, DVH curves,
/// and the global proximity.
pub fn evaluate_plan(x: &Vector, blocks: &[BlockSpec], check_tol: f64) -> Result<PlanEval> {
    let mut evals = Vec::with_capacity(blocks.len());
    let mut proximity = 0.0;
    for block in blocks {
        let dose = block.map.apply(x)?;
        let norms = row_norms(&block.map);
        let beta = block.pvc.map(|p| p.beta).unwrap_or(0.0);
        let mut bound_violations = 0;
        let mut original_violations = 0;
        for i in 0..dose.len() {
            let relaxed = if beta == 0.0 {
                block.bounds[i]
            } else {
                match block.sense {
                    Sense::UpperLe => (1.0 + beta) * block.bounds[i],
                    Sense::LowerGe => (1.0 - beta) * block.bounds[i],
                }
            };
            let r_relaxed = signed_residual(dose[i], relaxed, block.sense);
            let r_original = signed_residual(dose[i], block.bounds[i], block.sense);
            if r_relaxed > check_tol * norms[i] {
                bound_violations += 1;
            }
            if r_original > check_tol * norms[i] {
                original_violations += 1;
            }
            if norms[i] > 0.0 {
                let d = r_relaxed.max(0.0) / norms[i];
                proximity += d * d;
            } else if r_relaxed > 0.0 {
                proximity = f64::INFINITY;
            }
        }
        let (allowed_violations, pvc_satisfied) = match block.pvc {
            Some(p) => {
                let k = violation_budget(p.alpha, block.rows());
                if k < block.rows() {
                    let set = PvcSet::new(block.bounds.clone(), block.sense, k)?;
                    let ax_proj = project_pvc(&dose, &set)?;
                    let d = dose.distance(&ax_proj)?;
                    proximity += d * d;
                }
                (Some(k), original_violations <= k)
            }
            None => (None, true),
        };
        let max_dose = dose.iter().fold(0.0f64, |a, &b| a.max(b));
        let grid = 40;
        let thresholds = Vector::from_raw(
            (0..=grid)
                .map(|i| 1.05 * max_dose * i as f64 / grid as f64)
                .collect(),
        );
        evals.push(BlockEval {
            name: block.name.clone(),
            bound_violations,
            original_violations,
            allowed_violations,
            pvc_satisfied,
            dvh: compute_dvh(&dose, &thresholds)?,
        });
    }
    proximity += x.iter().map(|&v| if v < 0.0 { v * v } else { 0.0 }).sum::<f64>();
    Ok(PlanEval {
        blocks: evals,
        proximity,
    })
}

// ---------------------------------------------------------------------
// Synthetic instance generation
// ---------------------------------------------------------------------

/// Shape of one generated block.
#[derive(Debug, Clone)]
pub struct BlockDims {
    pub name: String,
    pub rows: usize,
    pub sense: Sense,
    pub pvc: Option<PvcParams>,
    /// Rows forced to violate their original (not relaxed) bound at the
    /// witness; clamped to the block's violation budget.
    pub tight_rows: usize,
}

/// Shape of a generated random instance.
#[derive(Debug, Clone)]
pub struct InstanceDims {
    pub dimension: usize,
    pub blocks: Vec<BlockDims>,
}

/// Draws a random instance that is feasible by construction and returns
/// the witness point.
///
/// Matrices have entries in `[0.05, 1)`, the witness in `[0.5, 1.5)`.
/// Bounds are placed with random slack around the witness dose; when a
/// block carries a count constraint, up to `tight_rows` of its largest
/// doses get bounds the witness violates originally but not after
/// relaxation, keeping the instance feasible while making the constraint
/// active.
pub fn generate_feasible_instance(
    dims: &InstanceDims,
    seed: u64,
) -> Result<(Vec<BlockSpec>, Vector)> {
    if dims.dimension == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xfea5_1b1e));
    let witness = Vector::from_raw(
        (0..dims.dimension)
            .map(|_| rng.gen_range(0.5..1.5))
            .collect(),
    );
    let mut blocks = Vec::with_capacity(dims.blocks.len());
    for spec in &dims.blocks {
        if spec.rows == 0 {
            return Err(Error::InvalidParameter(format!(
                "block '{}' needs at least one row",
                spec.name
            )));
        }
        let entries: Vec<f64> = (0..spec.rows * dims.dimension)
            .map(|_| rng.gen_range(0.05..1.0))
            .collect();
        let map = Arc::new(LinearMap::dense(spec.rows, dims.dimension, entries)?);
        let dose = map.apply(&witness)?;
        let mut bounds: Vec<f64> = (0..spec.rows)
            .map(|i| {
                let slack = rng.gen_range(0.1..0.4);
                match spec.sense {
                    Sense::UpperLe => dose[i] * (1.0 + slack),
                    Sense::LowerGe => (dose[i] * (1.0 - slack)).max(0.0),
                }
            })
            .collect();
        if let Some(p) = spec.pvc {
            let k = violation_budget(p.alpha, spec.rows);
            let tight = spec.tight_rows.min(k);
            // Tighten the largest doses so the witness violates exactly
            // those original bounds while still meeting the relaxed ones.
            let mut order: Vec<usize> = (0..spec.rows).collect();
            order.sort_unstable_by(|&a, &b| {
                dose[b].partial_cmp(&dose[a]).unwrap().then(a.cmp(&b))
            });
            for &i in order.iter().take(tight) {
                if dose[i] <= 0.0 {
                    continue;
                }
                match spec.sense {
                    Sense::UpperLe => {
                        let delta = p.beta / (2.0 * (1.0 + p.beta));
                        bounds[i] = dose[i] * (1.0 - delta);
                    }
                    Sense::LowerGe => {
                        let delta = p.beta / (2.0 * (1.0 - p.beta));
                        bounds[i] = dose[i] * (1.0 + delta);
                    }
                }
            }
        }
        blocks.push(BlockSpec::new(
            spec.name.clone(),
            map,
            spec.sense,
            Vector::new(bounds)?,
            spec.pvc,
        )?);
    }
    Ok((blocks, witness))
}

/// Layout and prescription parameters for the synthetic phantom.
#[derive(Debug, Clone)]
pub struct PhantomConfig {
    /// Grid size in voxels (nx, ny).
    pub grid: (usize, usize),
    /// Number of beam directions, spread over a half turn.
    pub beams: usize,
    pub beamlets_per_beam: usize,
    /// Gaussian lateral falloff width, in voxel units.
    pub kernel_width: f64,
    /// Target disk radius around the grid center, in voxel units.
    pub target_radius: f64,
    /// Outer radius of the avoidance annulus surrounding the target.
    pub oar_outer_radius: f64,
    pub target_pvc: Option<PvcParams>,
    pub oar_pvc: Option<PvcParams>,
    /// Relative slack of the witness-derived prescriptions.
    pub margin: f64,
    /// Fraction of each violation budget forced tight at the witness.
    pub tight_fraction: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            grid: (16, 16),
            beams: 6,
            beamlets_per_beam: 4,
            kernel_width: 1.5,
            target_radius: 3.0,
            oar_outer_radius: 6.0,
            target_pvc: None,
            oar_pvc: None,
            margin: 0.2,
            tight_fraction: 0.5,
        }
    }
}

/// One beamlet's central axis.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: (f64, f64),
    pub direction: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct StructureGeometry {
    pub name: String,
    pub voxels: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct PhantomGeometry {
    pub nx: usize,
    pub ny: usize,
    pub center: (f64, f64),
    pub structures: Vec<StructureGeometry>,
    pub rays: Vec<Ray>,
}

/// Perpendicular distance from a point to a ray's axis.
pub fn ray_distance(ray: &Ray, point: (f64, f64)) -> f64 {
    let (dx, dy) = (point.0 - ray.origin.0, point.1 - ray.origin.1);
    // The direction is unit length, so the rejection is a dot product
    // with the unit normal.
    (dx * (-ray.direction.1) + dy * ray.direction.0).abs()
}

/// Builds a two-structure grid phantom: a target disk at the center and
/// an avoidance annulus around it, irradiated by evenly spread beamlet
/// rays depositing dose with Gaussian lateral falloff. Bounds are set
/// from a seeded witness so the instance is feasible by construction;
/// matrices depend only on the geometry.
pub fn generate_phantom(
    config: &PhantomConfig,
    seed: u64,
) -> Result<(Vec<BlockSpec>, PhantomGeometry)> {
    let (nx, ny) = config.grid;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("grid must be nonempty".into()));
    }
    if config.beams == 0 || config.beamlets_per_beam == 0 {
        return Err(Error::InvalidParameter(
            "phantom needs at least one beam and one beamlet".into(),
        ));
    }
    if config.kernel_width.is_nan() || config.kernel_width <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kernel width must be positive, got {}",
            config.kernel_width
        )));
    }
    if config.margin.is_nan() || config.margin <= 0.0 || config.margin >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "margin must lie in (0, 1), got {}",
            config.margin
        )));
    }
    if !(0.0..=1.0).contains(&config.tight_fraction) {
        return Err(Error::InvalidParameter(format!(
            "tight fraction must lie in [0, 1], got {}",
            config.tight_fraction
        )));
    }
    let center = (nx as f64 / 2.0, ny as f64 / 2.0);

    let mut target_voxels = Vec::new();
    let mut oar_voxels = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let p = (ix as f64 + 0.5, iy as f64 + 0.5);
            let r = ((p.0 - center.0).powi(2) + (p.1 - center.1).powi(2)).sqrt();
            if r <= config.target_radius {
                target_voxels.push((ix, iy));
            } else if r <= config.oar_outer_radius {
                oar_voxels.push((ix, iy));
            }
        }
    }
    if target_voxels.is_empty() {
        return Err(Error::EmptyStructure("target".into()));
    }
    if oar_voxels.is_empty() {
        return Err(Error::EmptyStructure("oar".into()));
    }

    let mut rays = Vec::with_capacity(config.beams * config.beamlets_per_beam);
    let spacing = 2.0 * config.oar_outer_radius / config.beamlets_per_beam as f64;
    for b in 0..config.beams {
        let theta = std::f64::consts::PI * b as f64 / config.beams as f64;
        let dir = (theta.cos(), theta.sin());
        let normal = (-dir.1, dir.0);
        for j in 0..config.beamlets_per_beam {
            let offset = spacing * (j as f64 - (config.beamlets_per_beam as f64 - 1.0) / 2.0);
            rays.push(Ray {
                origin: (center.0 + offset * normal.0, center.1 + offset * normal.1),
                direction: dir,
            });
        }
    }
    let n = rays.len();

    let dose_rows = |voxels: &[(usize, usize)]| -> Vec<f64> {
        let mut entries = Vec::with_capacity(voxels.len() * n);
        for &(ix, iy) in voxels {
            let p = (ix as f64 + 0.5, iy as f64 + 0.5);
            for ray in &rays {
                let d = ray_distance(ray, p);
                entries.push((-d * d / (2.0 * config.kernel_width * config.kernel_width)).exp());
            }
        }
        entries
    };
    let target_map = Arc::new(LinearMap::dense(target_voxels.len(), n, dose_rows(&target_voxels))?);
    let oar_map = Arc::new(LinearMap::dense(oar_voxels.len(), n, dose_rows(&oar_voxels))?);

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x9a17_70e5));
    let witness = Vector::from_raw((0..n).map(|_| rng.gen_range(0.5..1.5)).collect());

    let make_bounds = |map: &LinearMap,
                       sense: Sense,
                       pvc: Option<PvcParams>,
                       rng: &mut ChaCha8Rng|
     -> Result<Vector> {
        let dose = map.apply(&witness)?;
        let m = dose.len();
        let mut bounds: Vec<f64> = (0..m)
            .map(|i| {
                let slack = rng.gen_range(0.5 * config.margin..config.margin);
                match sense {
                    Sense::UpperLe => dose[i] * (1.0 + slack),
                    Sense::LowerGe => (dose[i] * (1.0 - slack)).max(0.0),
                }
            })
            .collect();
        if let Some(p) = pvc {
            let k = violation_budget(p.alpha, m);
            let tight = ((config.tight_fraction * k as f64).floor() as usize).min(k);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_unstable_by(|&a, &b| dose[b].partial_cmp(&dose[a]).unwrap().then(a.cmp(&b)));
            for &i in order.iter().take(tight) {
                if dose[i] <= 0.0 {
                    continue;
                }
                match sense {
                    Sense::UpperLe => {
                        bounds[i] = dose[i] * (1.0 - p.beta / (2.0 * (1.0 + p.beta)));
                    }
                    Sense::LowerGe => {
                        bounds[i] = dose[i] * (1.0 + p.beta / (2.0 * (1.0 - p.beta)));
                    }
                }
            }
        }
        Vector::new(bounds)
    };

    let target_bounds = make_bounds(&target_map, Sense::LowerGe, config.target_pvc, &mut rng)?;
    let oar_bounds = make_bounds(&oar_map, Sense::UpperLe, config.oar_pvc, &mut rng)?;

    let blocks = vec![
        BlockSpec::new("target", target_map, Sense::LowerGe, target_bounds, config.target_pvc)?,
        BlockSpec::new("oar", oar_map, Sense::UpperLe, oar_bounds, config.oar_pvc)?,
    ];
    let geometry = PhantomGeometry {
        nx,
        ny,
        center,
        structures: vec![
            StructureGeometry {
                name: "target".into(),
                voxels: target_voxels,
            },
            StructureGeometry {
                name: "oar".into(),
                voxels: oar_voxels,
            },
        ],
        rays,
    };
    Ok((blocks, geometry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::string_averaging::{next_plan, plan_apply, PlanConstraints, Strategy};

    fn vector(v: &[f64]) -> Vector {
        Vector::new(v.to_vec()).unwrap()
    }

    fn simple_block(pvc: Option<PvcParams>) -> BlockSpec {
        let map = Arc::new(
            LinearMap::from_rows(vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
                vec![2.0, 1.0],
            ])
            .unwrap(),
        );
        BlockSpec::new(
            "oar",
            map,
            Sense::UpperLe,
            vector(&[1.0, 1.0, 1.0, 1.0]),
            pvc,
        )
        .unwrap()
    }

    #[test]
    fn translate_block_without_pvc() {
        let problem = translate_problem(&[simple_block(None)]).unwrap();
        assert_eq!(problem.halfspace_count(), 4);
        assert_eq!(problem.landweber_count(), 0);
        assert_eq!(problem.operator_count(), 5);
        // Bounds are untouched.
        for hs in &problem.blocks[0].halfspaces {
            assert_eq!(hs.bound(), 1.0);
        }
    }

    #[test]
    fn translate_block_with_pvc() {
        let pvc = PvcParams::new(0.5, 0.1).unwrap();
        let problem = translate_problem(&[simple_block(Some(pvc))]).unwrap();
        assert_eq!(problem.halfspace_count(), 4);
        assert_eq!(problem.landweber_count(), 1);
        for hs in &problem.blocks[0].halfspaces {
            assert!((hs.bound() - 1.1).abs() < 1e-12);
        }
        let set = &problem.blocks[0].pvc.as_ref().unwrap().set;
        assert_eq!(set.max_violations(), 2);
        assert_eq!(set.bounds(), &vector(&[1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn zero_row_rejected_at_translation() {
        let map = Arc::new(LinearMap::from_rows(vec![vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap());
        let block = BlockSpec::new("bad", map, Sense::UpperLe, vector(&[1.0, 1.0]), None).unwrap();
        let err = translate_problem(&[block]).unwrap_err();
        assert!(err.to_string().contains("row 1 is zero"));
    }

    #[test]
    fn vacuous_pvc_behaves_like_no_pvc() {
        let with = translate_problem(&[simple_block(Some(PvcParams::new(1.0, 0.1).unwrap()))])
            .unwrap();
        let without = translate_problem(&[simple_block(None)]).unwrap();
        assert_eq!(with.operator_count(), without.operator_count());

        // A full constraint does relax the half-space bounds but adds no
        // Landweber operator, so trajectories of the *same* relaxed
        // problem with the constraint removed coincide exactly.
        let with_small_k =
            translate_problem(&[simple_block(Some(PvcParams::new(1.0, 0.1).unwrap()))]).unwrap();
        let params = IterationParams {
            lambdas: vec![1.0],
            gamma_scale: 0.95,
            stacked: 1,
        };
        let ops_a = with.build_ops(&params).unwrap();
        let ops_b = with_small_k.build_ops(&params).unwrap();
        let constraints = PlanConstraints::defaults(with.operator_count(), 0);
        for strategy in [Strategy::Sequential, Strategy::Simultaneous] {
            let mut xa = vector(&[3.0, -2.0]);
            let mut xb = xa.clone();
            for k in 0..30 {
                let plan = next_plan(&strategy, k, with.operator_count(), &constraints).unwrap();
                xa = plan_apply(&plan, &ops_a, &xa).unwrap();
                xb = plan_apply(&plan, &ops_b, &xb).unwrap();
                assert!(xa.distance(&xb).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn proximity_examples() {
        let map = Arc::new(LinearMap::from_rows(vec![vec![1.0]]).unwrap());
        let block =
            BlockSpec::new("b", map, Sense::UpperLe, vector(&[1.0]), None).unwrap();
        let problem = translate_problem(&[block]).unwrap();
        assert!((problem.proximity(&vector(&[3.0])).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(problem.proximity(&vector(&[0.5])).unwrap(), 0.0);

        // A vacuous count constraint adds nothing beyond its bound
        // relaxation; with the same relaxed bounds the values agree.
        let map2 = Arc::new(LinearMap::from_rows(vec![vec![1.0]]).unwrap());
        let vac = BlockSpec::new(
            "b",
            map2,
            Sense::UpperLe,
            vector(&[1.0]),
            Some(PvcParams::new(1.0, 0.5).unwrap()),
        )
        .unwrap();
        let vac_problem = translate_problem(&[vac]).unwrap();
        // Relaxed bound is 1.5; distance from 3 is 1.5.
        assert!((vac_problem.proximity(&vector(&[3.0])).unwrap() - 2.25).abs() < 1e-12);
    }

    #[test]
    fn violation_counts_and_trace() {
        let pvc = PvcParams::new(0.25, 0.1).unwrap();
        let problem = translate_problem(&[simple_block(Some(pvc))]).unwrap();
        // Dose at x = (1.2, 0): rows see (1.2, 0, 1.2, 2.4) against
        // relaxed bound 1.1 and original bound 1.0, budget K = 1.
        let x = vector(&[1.2, 0.0]);
        let counts = problem.violation_counts(&x).unwrap();
        assert_eq!(counts[0].halfspace_violations, 3);
        assert_eq!(counts[0].pvc_excess, 2);

        let params = IterationParams {
            lambdas: vec![0.8],
            gamma_scale: 0.9,
            stacked: 1,
        };
        let trace = problem.block_trace(&counts, &params);
        assert_eq!(trace[0].lambda, 0.8);
        let gamma = trace[0].gamma.unwrap();
        let bound = problem.blocks[0].pvc.as_ref().unwrap().norm_sq_upper;
        assert!((gamma - 0.9 / bound).abs() < 1e-15);
    }

    #[test]
    fn dvh_examples() {
        let curve = compute_dvh(&vector(&[2.0, 2.0, 2.0]), &vector(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(curve.fractions, vec![1.0, 1.0, 0.0]);

        let curve = compute_dvh(&vector(&[0.0, 1.0, 2.0, 3.0]), &vector(&[1.5])).unwrap();
        assert_eq!(curve.fractions, vec![0.5]);

        let empty = compute_dvh(&vector(&[1.0]), &Vector::zeros(0)).unwrap();
        assert!(empty.thresholds.is_empty() && empty.fractions.is_empty());

        assert!(compute_dvh(&vector(&[-0.1]), &vector(&[0.0])).is_err());

        // Monotone non-increasing, starts at 1 for threshold 0.
        let curve = compute_dvh(
            &vector(&[0.3, 1.7, 0.9, 2.5]),
            &vector(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
        )
        .unwrap();
        assert_eq!(curve.fractions[0], 1.0);
        for w in curve.fractions.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn feasible_instance_witness_checks_out() {
        let dims = InstanceDims {
            dimension: 6,
            blocks: vec![
                BlockDims {
                    name: "oar".into(),
                    rows: 10,
                    sense: Sense::UpperLe,
                    pvc: Some(PvcParams::new(0.3, 0.1).unwrap()),
                    tight_rows: 3,
                },
                BlockDims {
                    name: "target".into(),
                    rows: 8,
                    sense: Sense::LowerGe,
                    pvc: None,
                    tight_rows: 0,
                },
            ],
        };
        let (blocks, witness) = generate_feasible_instance(&dims, 99).unwrap();
        let eval = evaluate_plan(&witness, &blocks, DEFAULT_CHECK_TOL).unwrap();
        for b in &eval.blocks {
            assert_eq!(b.bound_violations, 0, "block {}", b.name);
            assert!(b.pvc_satisfied);
        }
        // The count constraint is tight: exactly K = 3 original violations.
        assert_eq!(eval.blocks[0].original_violations, 3);
        assert_eq!(eval.blocks[0].allowed_violations, Some(3));

        // The witness also has zero proximity on the translated problem.
        let problem = translate_problem(&blocks).unwrap();
        assert!(problem.proximity(&witness).unwrap() <= 1e-18);
    }

    #[test]
    fn zero_matrix_block_is_trivially_feasible_by_direct_evaluation() {
        let map = Arc::new(LinearMap::dense(3, 2, vec![0.0; 6]).unwrap());
        let block =
            BlockSpec::new("null", map, Sense::UpperLe, vector(&[0.5, 0.0, 1.0]), None).unwrap();
        let eval =
            evaluate_plan(&vector(&[4.0, 5.0]), std::slice::from_ref(&block), DEFAULT_CHECK_TOL)
                .unwrap();
        assert_eq!(eval.blocks[0].bound_violations, 0);
        assert!(eval.blocks[0].pvc_satisfied);
        assert_eq!(eval.proximity, 0.0);
        // Translation rejects the degenerate rows.
        assert!(translate_problem(&[block]).is_err());
    }

    #[test]
    fn phantom_shapes_and_determinism() {
        let config = PhantomConfig {
            beams: 4,
            beamlets_per_beam: 2,
            ..PhantomConfig::default()
        };
        let (blocks, geometry) = generate_phantom(&config, 1).unwrap();
        assert_eq!(blocks.len(), 2);
        let n = config.beams * config.beamlets_per_beam;
        assert_eq!(blocks[0].map.cols(), n);
        assert_eq!(blocks[0].rows(), geometry.structures[0].voxels.len());
        assert_eq!(blocks[1].rows(), geometry.structures[1].voxels.len());
        for b in &blocks {
            for i in 0..b.rows() {
                assert!(b.map.row_dense(i).iter().all(|&v| v >= 0.0));
            }
        }

        let (again, _) = generate_phantom(&config, 1).unwrap();
        for (a, b) in blocks.iter().zip(&again) {
            for i in 0..a.rows() {
                assert_eq!(a.map.row_dense(i), b.map.row_dense(i));
            }
            assert_eq!(a.bounds, b.bounds);
        }
        let (other, _) = generate_phantom(&config, 2).unwrap();
        assert_ne!(blocks[0].bounds, other[0].bounds);
    }

    #[test]
    fn phantom_rows_vanish_far_from_rays() {
        let config = PhantomConfig {
            beams: 1,
            beamlets_per_beam: 1,
            kernel_width: 0.8,
            ..PhantomConfig::default()
        };
        let (blocks, geometry) = generate_phantom(&config, 3).unwrap();
        let ray = &geometry.rays[0];
        // Check the single-beam geometry against the distance oracle: any
        // voxel further than five kernel widths gets a negligible entry.
        for (s, block) in blocks.iter().enumerate() {
            for (r, &(ix, iy)) in geometry.structures[s].voxels.iter().enumerate() {
                let d = ray_distance(ray, (ix as f64 + 0.5, iy as f64 + 0.5));
                let entry = block.map.row_dense(r)[0];
                let expected = (-d * d / (2.0 * config.kernel_width * config.kernel_width)).exp();
                assert!((entry - expected).abs() < 1e-12);
                if d > 5.0 * config.kernel_width {
                    assert!(entry < 1e-6);
                }
            }
        }
    }

    #[test]
    fn phantom_rejects_degenerate_geometry() {
        let config = PhantomConfig {
            target_radius: 0.1,
            ..PhantomConfig::default()
        };
        assert!(matches!(
            generate_phantom(&config, 0),
            Err(Error::EmptyStructure(_))
        ));
    }

    #[test]
    fn evaluate_plan_examples() {
        // Hand-built two-voxel block; x pushes exactly one voxel over.
        let map = Arc::new(LinearMap::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let block =
            BlockSpec::new("pair", map, Sense::UpperLe, vector(&[1.0, 1.0]), None).unwrap();
        let eval = evaluate_plan(&vector(&[2.0, 0.5]), &[block], DEFAULT_CHECK_TOL).unwrap();
        assert_eq!(eval.blocks[0].bound_violations, 1);

        // Zero intensities against positive target lower bounds.
        let map = Arc::new(LinearMap::from_rows(vec![vec![1.0, 1.0]]).unwrap());
        let target =
            BlockSpec::new("target", map, Sense::LowerGe, vector(&[2.0]), None).unwrap();
        let eval = evaluate_plan(&Vector::zeros(2), &[target], DEFAULT_CHECK_TOL).unwrap();
        assert_eq!(eval.blocks[0].bound_violations, 1);
        assert!(eval.proximity > 0.0);
    }
}
