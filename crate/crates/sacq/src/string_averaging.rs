//! The dynamic string-averaging engine.
//!
//! An iteration applies, for every index string `t` of the current plan,
//! the block operators named by `t` in order, and then forms the weighted
//! average of the string end-points. Plans may change from iteration to
//! iteration as long as they stay inside the admissible family: every
//! operator index covered, string lengths capped by `q_bar`, weights
//! positive, summing to one and bounded below by `delta`.
//!
//! Strings within one iteration are independent and may be evaluated in
//! parallel; the combination step always sums in the plan's canonical
//! (lexicographic) string order, so traces are bit-reproducible no matter
//! how the work was scheduled.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, PlanError, Result};
use crate::landweber::splitmix64;
use crate::operators::{apply, check_dims, OperatorNode, Vector, WEIGHT_SUM_TOL};
use crate::rttp::{BlockCounts, IterationParams, SplitProblem};

/// Per-string work estimate (entries touched) below which strings are
/// applied on the calling thread instead of the thread pool.
const PARALLEL_WORK_THRESHOLD: usize = 1 << 12;

/// A nonempty sequence of operator indices (1-based). The first listed
/// index is applied first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IndexVector(Vec<usize>);

impl IndexVector {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter(
                "an index vector must contain at least one index".into(),
            ));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }
}

/// A family of index strings with positive weights, kept sorted
/// lexicographically so that averaging has one canonical summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct StringPlan {
    entries: Vec<(IndexVector, f64)>,
}

impl StringPlan {
    pub fn new(strings: Vec<IndexVector>, weights: Vec<f64>) -> Result<Self> {
        if strings.is_empty() {
            return Err(PlanError::Empty.into());
        }
        if strings.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} strings but {} weights",
                strings.len(),
                weights.len()
            )));
        }
        let mut entries: Vec<(IndexVector, f64)> =
            strings.into_iter().zip(weights).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self { entries })
    }

    /// Single string carrying full weight.
    pub fn single(string: IndexVector) -> Self {
        Self {
            entries: vec![(string, 1.0)],
        }
    }

    pub fn strings(&self) -> impl Iterator<Item = (&IndexVector, f64)> {
        self.entries.iter().map(|(t, w)| (t, *w))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn longest_string(&self) -> usize {
        self.entries.iter().map(|(t, _)| t.len()).max().unwrap_or(0)
    }
}

/// Bounds defining the admissible plan family: a weight floor
/// `delta` in `(0, 1/p)` and a string-length cap `q_bar >= p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConstraints {
    pub delta: f64,
    pub q_bar: usize,
}

impl PlanConstraints {
    pub fn new(delta: f64, q_bar: usize) -> Self {
        Self { delta, q_bar }
    }

    /// `delta = 1/(2p)` and `q_bar = max(p, longest scheduled string)`.
    pub fn defaults(p: usize, longest_custom: usize) -> Self {
        Self {
            delta: 1.0 / (2.0 * p as f64),
            q_bar: p.max(longest_custom),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if p == 0 {
            return Err(Error::InvalidParameter(
                "a plan family needs at least one operator".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0 / p as f64) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1/{p}), got {}",
                self.delta
            )));
        }
        if self.q_bar < p {
            return Err(Error::InvalidParameter(format!(
                "q_bar must be at least the operator count {p}, got {}",
                self.q_bar
            )));
        }
        Ok(())
    }
}

/// Checks every admissibility invariant of `plan` against `constraints`
/// and the operator count `p`.
pub fn validate_plan(
    plan: &StringPlan,
    constraints: &PlanConstraints,
    p: usize,
) -> Result<(), PlanError> {
    if plan.entries.is_empty() {
        return Err(PlanError::Empty);
    }
    for (s, (t, _)) in plan.entries.iter().enumerate() {
        for &idx in t.indices() {
            if idx == 0 || idx > p {
                return Err(PlanError::IndexOutOfRange {
                    string: s,
                    index: idx,
                    count: p,
                });
            }
        }
    }
    for (s, (t, _)) in plan.entries.iter().enumerate() {
        if t.len() > constraints.q_bar {
            return Err(PlanError::StringTooLong {
                index: s,
                length: t.len(),
                q_bar: constraints.q_bar,
            });
        }
    }
    let mut covered = vec![false; p];
    for (t, _) in &plan.entries {
        for &idx in t.indices() {
            covered[idx - 1] = true;
        }
    }
    let missing: Vec<usize> = (1..=p).filter(|&i| !covered[i - 1]).collect();
    if !missing.is_empty() {
        return Err(PlanError::NotFit { missing });
    }
    let sum: f64 = plan.entries.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(PlanError::WeightSumViolation { sum });
    }
    for (s, (_, w)) in plan.entries.iter().enumerate() {
        if *w < constraints.delta {
            return Err(PlanError::WeightBelowDelta {
                index: s,
                weight: *w,
                delta: constraints.delta,
            });
        }
    }
    Ok(())
}

/// Applies the operators named by `t` in order: the first listed index
/// acts first.
pub fn string_apply(t: &IndexVector, ops: &[OperatorNode], x: &Vector) -> Result<Vector> {
    let mut current = x.clone();
    for (s, &idx) in t.indices().iter().enumerate() {
        if idx == 0 || idx > ops.len() {
            return Err(PlanError::IndexOutOfRange {
                string: s,
                index: idx,
                count: ops.len(),
            }
            .into());
        }
        current = apply(&ops[idx - 1], &current)?;
    }
    Ok(current)
}

/// Weighted average of all string end-points, summed in the plan's
/// canonical string order.
pub fn plan_apply(plan: &StringPlan, ops: &[OperatorNode], x: &Vector) -> Result<Vector> {
    let work: usize = plan
        .entries
        .iter()
        .map(|(t, _)| t.len() * x.len())
        .sum();
    let parallel = plan.len() >= 2 && work / plan.len() >= PARALLEL_WORK_THRESHOLD;
    let endpoints: Vec<Result<Vector>> = if parallel {
        plan.entries
            .par_iter()
            .map(|(t, _)| string_apply(t, ops, x))
            .collect()
    } else {
        plan.entries
            .iter()
            .map(|(t, _)| string_apply(t, ops, x))
            .collect()
    };
    let mut acc = vec![0.0; x.len()];
    for ((_, w), endpoint) in plan.entries.iter().zip(endpoints) {
        let y = endpoint?;
        check_dims(acc.len(), y.len())?;
        for (a, yi) in acc.iter_mut().zip(y.iter()) {
            *a += w * yi;
        }
    }
    Ok(Vector::from_raw(acc))
}

/// How the per-iteration plan is chosen.
#[derive(Debug, Clone)]
pub enum Strategy {
    /// One string visiting every operator in index order.
    Sequential,
    /// One singleton string per operator, uniform weights.
    Simultaneous,
    /// A seeded random partition of the index set into strings, fresh
    /// each iteration, uniform weights.
    RandomDynamic { seed: u64 },
    /// A user-provided cycle of plans.
    Custom(Vec<StringPlan>),
}

/// Plan for iteration `k` under the given strategy. Every returned plan
/// passes [`validate_plan`].
pub fn next_plan(
    strategy: &Strategy,
    k: usize,
    p: usize,
    constraints: &PlanConstraints,
) -> Result<StringPlan> {
    let plan = match strategy {
        Strategy::Sequential => StringPlan::single(IndexVector::new((1..=p).collect())?),
        Strategy::Simultaneous => {
            let strings: Result<Vec<_>> = (1..=p).map(|i| IndexVector::new(vec![i])).collect();
            StringPlan::new(strings?, vec![1.0 / p as f64; p])?
        }
        Strategy::RandomDynamic { seed } => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(splitmix64(*seed ^ splitmix64(k as u64)));
            let mut perm: Vec<usize> = (1..=p).collect();
            perm.shuffle(&mut rng);
            let mut strings = Vec::new();
            let mut start = 0;
            while start < p {
                let remaining = p - start;
                let len = rng.gen_range(1..=remaining.min(constraints.q_bar));
                strings.push(IndexVector::new(perm[start..start + len].to_vec())?);
                start += len;
            }
            let w = 1.0 / strings.len() as f64;
            let count = strings.len();
            StringPlan::new(strings, vec![w; count])?
        }
        Strategy::Custom(schedule) => {
            if schedule.is_empty() {
                return Err(Error::InvalidParameter(
                    "custom schedule must contain at least one plan".into(),
                ));
            }
            schedule[k % schedule.len()].clone()
        }
    };
    validate_plan(&plan, constraints, p)?;
    Ok(plan)
}

/// Relaxation schedule for the per-block half-space projections.
#[derive(Debug, Clone)]
pub enum LambdaSchedule {
    Fixed(f64),
    /// When a block's count-constraint excess exceeds its half-space
    /// violation count, multiply that block's relaxation by `factor`
    /// (clamped at `floor`); optionally grow the stacked projection count.
    Adaptive {
        initial: f64,
        factor: f64,
        floor: f64,
        grow_stacked: bool,
        max_stacked: usize,
    },
}

impl LambdaSchedule {
    fn initial(&self) -> f64 {
        match self {
            LambdaSchedule::Fixed(v) => *v,
            LambdaSchedule::Adaptive { initial, .. } => *initial,
        }
    }
}

/// Starting point for the iteration.
#[derive(Debug, Clone)]
pub enum StartPoint {
    /// The zero vector (no beam intensity).
    Zero,
    /// Seeded uniform entries in `[0, 1)`.
    Random,
    Given(Vector),
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub strategy: Strategy,
    /// Plan-family bounds; derived from the operator count when absent.
    pub constraints: Option<PlanConstraints>,
    /// Fraction of each admissible step interval `(0, 1/L)` used.
    pub gamma_scale: f64,
    pub lambda: LambdaSchedule,
    pub stacked_projections: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub stall_window: usize,
    pub stall_eps: f64,
    pub seed: u64,
    pub x0: StartPoint,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Sequential,
            constraints: None,
            gamma_scale: 0.95,
            lambda: LambdaSchedule::Fixed(1.0),
            stacked_projections: 1,
            tol: 1e-6,
            max_iter: 10_000,
            stall_window: 50,
            stall_eps: 1e-10,
            seed: 0,
            x0: StartPoint::Zero,
        }
    }
}

/// Why the solve loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Proximity reached the tolerance.
    Solved,
    /// Iteration cap reached first.
    MaxIters,
    /// Best proximity stopped improving over the stall window.
    Stalled,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Solved => "Solved",
            Status::MaxIters => "MaxIters",
            Status::Stalled => "Stalled",
        }
    }
}

/// Per-block diagnostics captured each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    /// Rows of the block whose relaxed bound is violated.
    pub halfspace_violations: usize,
    /// Bound violations beyond the block's allowed count (zero for blocks
    /// without a count constraint).
    pub pvc_excess: usize,
    /// Relaxation in effect for the block's row projections.
    pub lambda: f64,
    /// Landweber step in effect, for blocks carrying a count constraint.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub proximity: f64,
    pub blocks: Vec<BlockTrace>,
}

/// The iterate, iteration counter and the append-only trace.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub iterate: Vector,
    pub iteration: usize,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: Vector,
    pub state: SolverState,
    pub status: Status,
}

/// One application of the configured adaptive rule. Returns true when any
/// parameter changed. Relaxations never leave `(0, 2)` and the stacked
/// projection count never exceeds its cap.
pub fn adaptive_update(
    params: &mut IterationParams,
    counts: &[BlockCounts],
    schedule: &LambdaSchedule,
) -> bool {
    let LambdaSchedule::Adaptive {
        factor,
        floor,
        grow_stacked,
        max_stacked,
        ..
    } = schedule
    else {
        return false;
    };
    let mut changed = false;
    let mut any_excess = false;
    for (l, c) in counts.iter().enumerate() {
        if c.pvc_excess > c.halfspace_violations {
            any_excess = true;
            let next = (params.lambdas[l] * factor).max(*floor);
            if next != params.lambdas[l] {
                params.lambdas[l] = next;
                changed = true;
            }
        }
    }
    if *grow_stacked && any_excess && params.stacked < *max_stacked {
        params.stacked += 1;
        changed = true;
    }
    changed
}

fn validate_config(config: &SolveConfig) -> Result<()> {
    if !(config.gamma_scale > 0.0 && config.gamma_scale < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma_scale must lie in (0, 1), got {}",
            config.gamma_scale
        )));
    }
    let check_lambda = |v: f64, what: &str| {
        if v > 0.0 && v < 2.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{what} must lie in (0, 2), got {v}"
            )))
        }
    };
    match &config.lambda {
        LambdaSchedule::Fixed(v) => check_lambda(*v, "lambda")?,
        LambdaSchedule::Adaptive {
            initial,
            factor,
            floor,
            max_stacked,
            ..
        } => {
            check_lambda(*initial, "initial lambda")?;
            check_lambda(*floor, "lambda floor")?;
            if !(*factor > 0.0 && *factor < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "adaptive lambda factor must lie in (0, 1), got {factor}"
                )));
            }
            if *max_stacked == 0 {
                return Err(Error::InvalidParameter(
                    "max stacked projection count must be at least 1".into(),
                ));
            }
        }
    }
    if config.stacked_projections == 0 {
        return Err(Error::InvalidParameter(
            "stacked projection count must be at least 1".into(),
        ));
    }
    if config.tol.is_nan() || config.tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            config.tol
        )));
    }
    if config.stall_window == 0 {
        return Err(Error::InvalidParameter(
            "stall window must be at least 1".into(),
        ));
    }
    Ok(())
}

fn initial_point(problem: &SplitProblem, config: &SolveConfig) -> Result<Vector> {
    match &config.x0 {
        StartPoint::Zero => Ok(Vector::zeros(problem.dimension())),
        StartPoint::Random => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x5f0_c0de));
            Ok(Vector::from_raw(
                (0..problem.dimension()).map(|_| rng.gen_range(0.0..1.0)).collect(),
            ))
        }
        StartPoint::Given(v) => {
            check_dims(problem.dimension(), v.len())?;
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
            Ok(v.clone())
        }
    }
}

/// Resolved plan-family bounds for this problem and strategy.
pub fn resolve_constraints(config: &SolveConfig, p: usize) -> Result<PlanConstraints> {
    let longest_custom = match &config.strategy {
        Strategy::Custom(schedule) => schedule
            .iter()
            .map(|plan| plan.longest_string())
            .max()
            .unwrap_or(0),
        _ => 0,
    };
    let constraints = config
        .constraints
        .unwrap_or_else(|| PlanConstraints::defaults(p, longest_custom));
    constraints.validate(p)?;
    Ok(constraints)
}

/// Runs the string-averaging iteration until the proximity function drops
/// to the tolerance, the iteration cap is hit, or progress stalls.
pub fn solve(problem: &SplitProblem, config: &SolveConfig) -> Result<SolveOutcome> {
    validate_config(config)?;
    let p = problem.operator_count();
    let constraints = resolve_constraints(config, p)?;
    if let Strategy::Custom(schedule) = &config.strategy {
        if schedule.is_empty() {
            return Err(Error::InvalidParameter(
                "custom schedule must contain at least one plan".into(),
            ));
        }
        for plan in schedule {
            validate_plan(plan, &constraints, p)?;
        }
    }

    let mut params = IterationParams {
        lambdas: vec![config.lambda.initial(); problem.block_count()],
        gamma_scale: config.gamma_scale,
        stacked: config.stacked_projections,
    };
    let mut ops = problem.build_ops(&params)?;
    let mut x = initial_point(problem, config)?;
    let mut prev = x.clone();
    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut best_prox = f64::INFINITY;
    let mut last_improvement = 0usize;
    let adaptive = matches!(config.lambda, LambdaSchedule::Adaptive { .. });

    for k in 0..=config.max_iter {
        if !x.is_finite() {
            return Err(Error::NonFiniteIterate {
                iteration: k,
                state: Box::new(SolverState {
                    iterate: prev,
                    iteration: k.saturating_sub(1),
                    trace,
                }),
            });
        }
        let counts = problem.violation_counts(&x)?;
        if adaptive && k > 0 && adaptive_update(&mut params, &counts, &config.lambda) {
            ops = problem.build_ops(&params)?;
        }
        let proximity = problem.proximity(&x)?;
        trace.push(TraceRecord {
            k,
            proximity,
            blocks: problem.block_trace(&counts, &params),
        });

        let finish = |status: Status| SolveOutcome {
            solution: x.clone(),
            state: SolverState {
                iterate: x.clone(),
                iteration: k,
                trace: trace.clone(),
            },
            status,
        };
        if proximity <= config.tol {
            return Ok(finish(Status::Solved));
        }
        if k == config.max_iter {
            return Ok(finish(Status::MaxIters));
        }
        if proximity < best_prox * (1.0 - config.stall_eps) || best_prox.is_infinite() {
            best_prox = best_prox.min(proximity);
            last_improvement = k;
        } else if k - last_improvement >= config.stall_window {
            return Ok(finish(Status::Stalled));
        }

        let plan = next_plan(&config.strategy, k, p, &constraints)?;
        prev = x;
        x = plan_apply(&plan, &ops, &prev)?;
    }
    unreachable!("loop exits through a status or an error");
}
