//! Independent solution verifier.
//!
//! Shares only the file parsers with the solver: constraint evaluation is
//! re-implemented here directly from the translated-problem inequalities
//! (relaxed bounds row by row, violation counts against the original
//! bounds, nonnegativity), without the operator machinery.

use crate::error::{Error, Result};
use crate::rttp::DEFAULT_CHECK_TOL;

use super::files::{ProblemBlock, ProblemFile, SenseTag};

#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub name: String,
    pub rows: usize,
    /// Rows violating the relaxed bound beyond the tolerance.
    pub relaxed_violations: usize,
    /// Rows violating the original bound beyond the tolerance.
    pub original_violations: usize,
    /// Violation budget, when the block carries a count constraint.
    pub allowed: Option<usize>,
    pub pvc_ok: bool,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub blocks: Vec<BlockCheck>,
    pub negative_entries: usize,
    pub feasible: bool,
}

/// Row-wise dose values and row norms computed straight from the file's
/// coefficient lists.
fn doses_and_norms(block: &ProblemBlock, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match (&block.dense, &block.sparse) {
        (Some(rows), _) => {
            let dose = rows
                .iter()
                .map(|r| r.iter().zip(x).map(|(a, xi)| a * xi).sum())
                .collect();
            let norms = rows
                .iter()
                .map(|r| r.iter().map(|a| a * a).sum::<f64>().sqrt())
                .collect();
            (dose, norms)
        }
        (None, Some(s)) => {
            // Merge duplicate triplet positions before accumulating so
            // the row norms are norms of the effective rows.
            let mut entries: Vec<(usize, usize, f64)> = s.triplets.clone();
            entries.sort_unstable_by_key(|t| (t.0, t.1));
            let mut dose = vec![0.0; s.rows];
            let mut norms_sq = vec![0.0; s.rows];
            let mut idx = 0;
            while idx < entries.len() {
                let (i, j, mut v) = entries[idx];
                idx += 1;
                while idx < entries.len() && entries[idx].0 == i && entries[idx].1 == j {
                    v += entries[idx].2;
                    idx += 1;
                }
                dose[i] += v * x[j];
                norms_sq[i] += v * v;
            }
            (dose, norms_sq.iter().map(|n| n.sqrt()).collect())
        }
        (None, None) => (Vec::new(), Vec::new()),
    }
}

/// Evaluates the translated-problem conditions at `x` with a per-row
/// tolerance of `tol` in distance units (see [`DEFAULT_CHECK_TOL`]).
pub fn check_solution(problem: &ProblemFile, x: &[f64], tol: f64) -> Result<CheckReport> {
    if x.len() != problem.dimension {
        return Err(Error::DimensionMismatch {
            expected: problem.dimension,
            found: x.len(),
        });
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "check tolerance must be nonnegative, got {tol}"
        )));
    }
    let mut blocks = Vec::with_capacity(problem.blocks.len());
    let mut feasible = true;
    for block in &problem.blocks {
        let (dose, norms) = doses_and_norms(block, x);
        let m = dose.len();
        let beta = block.beta.unwrap_or(0.0);
        let mut relaxed_violations = 0;
        let mut original_violations = 0;
        for i in 0..m {
            let b = block.bounds[i];
            let relaxed = match block.sense {
                SenseTag::Upper => (1.0 + beta) * b,
                SenseTag::Lower => (1.0 - beta) * b,
            };
            let (r_relaxed, r_original) = match block.sense {
                SenseTag::Upper => (dose[i] - relaxed, dose[i] - b),
                SenseTag::Lower => (relaxed - dose[i], b - dose[i]),
            };
            if r_relaxed > tol * norms[i] {
                relaxed_violations += 1;
            }
            if r_original > tol * norms[i] {
                original_violations += 1;
            }
        }
        let allowed = block.alpha.map(|alpha| {
            ((alpha * m as f64 + 1e-9).floor() as usize).min(m)
        });
        let pvc_ok = allowed.is_none_or(|k| original_violations <= k);
        feasible = feasible && relaxed_violations == 0 && pvc_ok;
        blocks.push(BlockCheck {
            name: block.name.clone(),
            rows: m,
            relaxed_violations,
            original_violations,
            allowed,
            pvc_ok,
        });
    }
    let negative_entries = x.iter().filter(|&&v| v < -tol).count();
    feasible = feasible && negative_entries == 0;
    Ok(CheckReport {
        blocks,
        negative_entries,
        feasible,
    })
}

/// Convenience wrapper using the default tolerance.
pub fn check_solution_default(problem: &ProblemFile, x: &[f64]) -> Result<CheckReport> {
    check_solution(problem, x, DEFAULT_CHECK_TOL)
}
