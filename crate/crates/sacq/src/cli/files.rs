//! Problem, config, solution and trace file handling.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landweber::LinearMap;
use crate::operators::{Sense, Vector};
use crate::rttp::{BlockSpec, PvcParams, SplitProblem};
use crate::string_averaging::{
    BlockTrace, IndexVector, LambdaSchedule, PlanConstraints, SolveConfig, StartPoint, Strategy,
    StringPlan, TraceRecord,
};

use super::display_path;

/// Version accepted for problem and config files.
pub const FILE_VERSION: u32 = 1;

/// Dense storage is limited to this many coefficients; larger maps must
/// use sparse triplets.
pub const DENSE_COEFF_LIMIT: usize = 1_000_000;

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: display_path(path),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------
// Problem files
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SenseTag {
    Upper,
    Lower,
}

impl From<SenseTag> for Sense {
    fn from(tag: SenseTag) -> Sense {
        match tag {
            SenseTag::Upper => Sense::UpperLe,
            SenseTag::Lower => Sense::LowerGe,
        }
    }
}

impl From<Sense> for SenseTag {
    fn from(sense: Sense) -> SenseTag {
        match sense {
            Sense::UpperLe => SenseTag::Upper,
            Sense::LowerGe => SenseTag::Lower,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SparseMatrixFile {
    pub rows: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub name: String,
    pub sense: SenseTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<SparseMatrixFile>,
    pub bounds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl ProblemBlock {
    pub fn rows(&self) -> usize {
        match (&self.dense, &self.sparse) {
            (Some(rows), _) => rows.len(),
            (None, Some(s)) => s.rows,
            (None, None) => 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    pub dimension: usize,
    pub blocks: Vec<ProblemBlock>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl ProblemFile {
    /// Validates the document and converts it into block specifications.
    pub fn to_blocks(&self) -> Result<Vec<BlockSpec>> {
        if self.version != FILE_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported problem file version {}, expected {FILE_VERSION}",
                self.version
            )));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidParameter(
                "problem dimension must be positive".into(),
            ));
        }
        let mut names = std::collections::HashSet::new();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            if !valid_name(&b.name) {
                return Err(Error::InvalidParameter(format!(
                    "block name '{}' must be nonempty and use only [A-Za-z0-9_-]",
                    b.name
                )));
            }
            if !names.insert(b.name.clone()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate block name '{}'",
                    b.name
                )));
            }
            let map = match (&b.dense, &b.sparse) {
                (Some(rows), None) => {
                    let coeffs = rows.len() * self.dimension;
                    if coeffs > DENSE_COEFF_LIMIT {
                        return Err(Error::InvalidParameter(format!(
                            "block '{}' has {coeffs} dense coefficients, above the limit \
                             {DENSE_COEFF_LIMIT}; use sparse triplets",
                            b.name
                        )));
                    }
                    if rows.iter().any(|r| r.len() != self.dimension) {
                        return Err(Error::InvalidParameter(format!(
                            "block '{}' has a dense row whose length differs from the \
                             problem dimension {}",
                            b.name, self.dimension
                        )));
                    }
                    LinearMap::from_rows(rows.clone())?
                }
                (None, Some(s)) => LinearMap::from_triplets(s.rows, self.dimension, &s.triplets)?,
                (Some(_), Some(_)) | (None, None) => {
                    return Err(Error::InvalidParameter(format!(
                        "block '{}' must provide exactly one of 'dense' or 'sparse'",
                        b.name
                    )));
                }
            };
            let pvc = match (b.alpha, b.beta) {
                (Some(alpha), Some(beta)) => Some(PvcParams::new(alpha, beta)?),
                (None, None) => None,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "block '{}' must provide alpha and beta together",
                        b.name
                    )));
                }
            };
            blocks.push(BlockSpec::new(
                b.name.clone(),
                Arc::new(map),
                b.sense.clone().into(),
                Vector::new(b.bounds.clone())?,
                pvc,
            )?);
        }
        Ok(blocks)
    }

    /// Serializes block specifications, choosing dense rows for small
    /// maps and sparse triplets otherwise.
    pub fn from_blocks(dimension: usize, blocks: &[BlockSpec]) -> Self {
        let blocks = blocks
            .iter()
            .map(|b| {
                let coeffs = b.map.rows() * b.map.cols();
                let (dense, sparse) = if coeffs <= DENSE_COEFF_LIMIT {
                    let rows = (0..b.map.rows())
                        .map(|i| b.map.row_dense(i).into_vec())
                        .collect();
                    (Some(rows), None)
                } else {
                    (
                        None,
                        Some(SparseMatrixFile {
                            rows: b.map.rows(),
                            triplets: b.map.triplets(),
                        }),
                    )
                };
                ProblemBlock {
                    name: b.name.clone(),
                    sense: b.sense.into(),
                    dense,
                    sparse,
                    bounds: b.bounds.as_slice().to_vec(),
                    alpha: b.pvc.map(|p| p.alpha),
                    beta: b.pvc.map(|p| p.beta),
                }
            })
            .collect();
        Self {
            version: FILE_VERSION,
            dimension,
            blocks,
        }
    }
}

pub fn read_problem(path: &Path) -> Result<ProblemFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_problem(path: &Path, file: &ProblemFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)
        .map_err(|e| parse_err(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub strings: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyFile {
    Sequential,
    Simultaneous,
    RandomDynamic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Custom {
        schedule: Vec<PlanFile>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaFile {
    Fixed {
        value: f64,
    },
    Adaptive {
        initial: f64,
        factor: f64,
        floor: f64,
        #[serde(default)]
        grow_stacked: bool,
        #[serde(default = "default_max_stacked")]
        max_stacked: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum X0Tag {
    Zero,
    Random,
}

fn default_strategy() -> StrategyFile {
    StrategyFile::Sequential
}
fn default_lambda() -> LambdaFile {
    LambdaFile::Fixed { value: 1.0 }
}
fn default_gamma_scale() -> f64 {
    0.95
}
fn default_stacked() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    10_000
}
fn default_stall_window() -> usize {
    50
}
fn default_stall_eps() -> f64 {
    1e-10
}
fn default_max_stacked() -> usize {
    4
}
fn default_x0() -> X0Tag {
    X0Tag::Zero
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    #[serde(default = "default_strategy")]
    pub strategy: StrategyFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_bar: Option<usize>,
    #[serde(default = "default_gamma_scale")]
    pub gamma_scale: f64,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaFile,
    #[serde(default = "default_stacked")]
    pub stacked_projections: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_stall_window")]
    pub stall_window: usize,
    #[serde(default = "default_stall_eps")]
    pub stall_eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_x0")]
    pub x0: X0Tag,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            version: FILE_VERSION,
            strategy: default_strategy(),
            delta: None,
            q_bar: None,
            gamma_scale: default_gamma_scale(),
            lambda: default_lambda(),
            stacked_projections: default_stacked(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            stall_window: default_stall_window(),
            stall_eps: default_stall_eps(),
            seed: 0,
            x0: default_x0(),
        }
    }
}

impl ConfigFile {
    /// Resolves the document into a solver configuration. Constraint
    /// bounds (`delta`, `q_bar`) are only materialized when at least one
    /// is given; otherwise the solver derives them from the problem.
    pub fn to_solve_config(&self, seed_override: Option<u64>) -> Result<SolveConfig> {
        if self.version != FILE_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported config file version {}, expected {FILE_VERSION}",
                self.version
            )));
        }
        let seed = seed_override.unwrap_or(self.seed);
        let strategy = match &self.strategy {
            StrategyFile::Sequential => Strategy::Sequential,
            StrategyFile::Simultaneous => Strategy::Simultaneous,
            StrategyFile::RandomDynamic { seed: s } => Strategy::RandomDynamic {
                seed: s.unwrap_or(seed),
            },
            StrategyFile::Custom { schedule } => {
                let mut plans = Vec::with_capacity(schedule.len());
                for plan in schedule {
                    let strings: Result<Vec<IndexVector>> = plan
                        .strings
                        .iter()
                        .map(|s| IndexVector::new(s.clone()))
                        .collect();
                    plans.push(StringPlan::new(strings?, plan.weights.clone())?);
                }
                Strategy::Custom(plans)
            }
        };
        let lambda = match &self.lambda {
            LambdaFile::Fixed { value } => LambdaSchedule::Fixed(*value),
            LambdaFile::Adaptive {
                initial,
                factor,
                floor,
                grow_stacked,
                max_stacked,
            } => LambdaSchedule::Adaptive {
                initial: *initial,
                factor: *factor,
                floor: *floor,
                grow_stacked: *grow_stacked,
                max_stacked: *max_stacked,
            },
        };
        Ok(SolveConfig {
            strategy,
            // Plan-family bounds need the operator count; the command
            // layer fills them in via `complete_constraints`.
            constraints: None,
            gamma_scale: self.gamma_scale,
            lambda,
            stacked_projections: self.stacked_projections,
            tol: self.tol,
            max_iter: self.max_iter,
            stall_window: self.stall_window,
            stall_eps: self.stall_eps,
            seed,
            x0: match self.x0 {
                X0Tag::Zero => StartPoint::Zero,
                X0Tag::Random => StartPoint::Random,
            },
        })
    }
}

/// Completes a half-specified constraint pair with the defaults for `p`.
pub fn complete_constraints(
    config: &ConfigFile,
    solve_config: &SolveConfig,
    p: usize,
) -> Option<PlanConstraints> {
    match (config.delta, config.q_bar) {
        (None, None) => None,
        (delta, q_bar) => {
            let defaults = PlanConstraints::defaults(
                p,
                match &solve_config.strategy {
                    Strategy::Custom(schedule) => schedule
                        .iter()
                        .map(|plan| plan.longest_string())
                        .max()
                        .unwrap_or(0),
                    _ => 0,
                },
            );
            Some(PlanConstraints::new(
                delta.unwrap_or(defaults.delta),
                q_bar.unwrap_or(defaults.q_bar),
            ))
        }
    }
}

pub fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_config(path: &Path, file: &ConfigFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)
        .map_err(|e| parse_err(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Solution vectors (one entry per line)
// ---------------------------------------------------------------------

pub fn read_solution(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            parse_err(path, format!("line {}: '{line}' is not a number", i + 1))
        })?;
        if !v.is_finite() {
            return Err(parse_err(path, format!("line {}: entry is not finite", i + 1)));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(parse_err(path, "solution file contains no entries"));
    }
    Ok(out)
}

pub fn write_solution(path: &Path, x: &Vector) -> Result<()> {
    let mut text = String::new();
    for v in x.iter() {
        text.push_str(&format!("{v}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Trace files (CSV, one record per iteration)
// ---------------------------------------------------------------------

/// Header layout of one block's trace columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceBlockInfo {
    pub name: String,
    pub has_gamma: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    pub blocks: Vec<TraceBlockInfo>,
    pub records: Vec<TraceRecord>,
}

/// Renders the trace as CSV: `k,proximity`, then per block the violation
/// counts, the relaxation, and (for constrained blocks) the step.
pub fn trace_to_csv(problem: &SplitProblem, records: &[TraceRecord]) -> String {
    let names = problem.block_names();
    let has_gamma: Vec<bool> = records
        .first()
        .map(|r| r.blocks.iter().map(|b| b.gamma.is_some()).collect())
        .unwrap_or_else(|| vec![false; names.len()]);
    let mut out = String::from("k,proximity");
    for (name, gamma) in names.iter().zip(&has_gamma) {
        out.push_str(&format!(",hs_viol_{name},pvc_excess_{name},lambda_{name}"));
        if *gamma {
            out.push_str(&format!(",gamma_{name}"));
        }
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{}", r.k, r.proximity));
        for b in &r.blocks {
            out.push_str(&format!(
                ",{},{},{}",
                b.halfspace_violations, b.pvc_excess, b.lambda
            ));
            if let Some(g) = b.gamma {
                out.push_str(&format!(",{g}"));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, problem: &SplitProblem, records: &[TraceRecord]) -> Result<()> {
    fs::write(path, trace_to_csv(problem, records))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceData> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, "trace file is empty"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns[0] != "k" || columns[1] != "proximity" {
        return Err(parse_err(path, "trace header must start with 'k,proximity'"));
    }
    let mut blocks: Vec<TraceBlockInfo> = Vec::new();
    let mut i = 2;
    while i < columns.len() {
        let name = columns[i]
            .strip_prefix("hs_viol_")
            .ok_or_else(|| parse_err(path, format!("unexpected trace column '{}'", columns[i])))?
            .to_string();
        let expect = [
            format!("pvc_excess_{name}"),
            format!("lambda_{name}"),
        ];
        if columns.len() < i + 3 || columns[i + 1] != expect[0] || columns[i + 2] != expect[1] {
            return Err(parse_err(
                path,
                format!("trace columns for block '{name}' are incomplete"),
            ));
        }
        let gamma_column = format!("gamma_{name}");
        let has_gamma = columns.get(i + 3).is_some_and(|c| *c == gamma_column);
        i += if has_gamma { 4 } else { 3 };
        blocks.push(TraceBlockInfo { name, has_gamma });
    }

    let mut records = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 + blocks
            .iter()
            .map(|b| if b.has_gamma { 4 } else { 3 })
            .sum::<usize>();
        if fields.len() != expected {
            return Err(parse_err(
                path,
                format!("line {}: expected {expected} fields, found {}", line_no + 2, fields.len()),
            ));
        }
        let mut cursor = fields.iter();
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, format!("line {}: '{s}' is not a count", line_no + 2)))
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(path, format!("line {}: '{s}' is not a number", line_no + 2)))
        };
        let k = parse_usize(cursor.next().unwrap())?;
        let proximity = parse_f64(cursor.next().unwrap())?;
        let mut block_traces = Vec::with_capacity(blocks.len());
        for info in &blocks {
            let halfspace_violations = parse_usize(cursor.next().unwrap())?;
            let pvc_excess = parse_usize(cursor.next().unwrap())?;
            let lambda = parse_f64(cursor.next().unwrap())?;
            let gamma = if info.has_gamma {
                Some(parse_f64(cursor.next().unwrap())?)
            } else {
                None
            };
            block_traces.push(BlockTrace {
                halfspace_violations,
                pvc_excess,
                lambda,
                gamma,
            });
        }
        records.push(TraceRecord {
            k,
            proximity,
            blocks: block_traces,
        });
    }
    Ok(TraceData { blocks, records })
}
