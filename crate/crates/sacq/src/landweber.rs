//! Landweber-type operators: transporting a range-space operator back to
//! the domain space through a linear map.
//!
//! Given a map `A` and an operator `T` acting on the range of `A`, the
//! operator `V(x) = x - gamma A^T (Ax - T(Ax))` has the same fixed points
//! as the constraint `Ax in Fix(T)` whenever `0 < gamma < 1 / ||A||^2`.
//! The squared spectral norm is estimated by power iteration with a
//! deterministic start vector so runs are reproducible.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::{apply, check_dims, OperatorNode, Vector};

/// Fraction of the admissible step interval `(0, 1/L)` used by default.
pub const DEFAULT_GAMMA_SCALE: f64 = 0.95;

/// Default relative tolerance for the power-iteration norm estimate.
pub const DEFAULT_NORM_TOL: f64 = 1e-10;

/// Default iteration cap for the power-iteration norm estimate.
pub const DEFAULT_NORM_MAX_ITER: usize = 5000;

#[derive(Debug, Clone)]
enum Storage {
    Dense {
        // Row-major `rows x cols`.
        entries: Vec<f64>,
    },
    Sparse {
        // CSR for `A x`, CSC for `A^T y`, assembled once from triplets.
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        row_val: Vec<f64>,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        col_val: Vec<f64>,
    },
}

/// A bounded linear map between Euclidean spaces, dense or sparse, with a
/// lazily cached upper bound on its squared spectral norm.
#[derive(Debug)]
pub struct LinearMap {
    rows: usize,
    cols: usize,
    storage: Storage,
    norm_sq_upper: OnceLock<f64>,
}

impl LinearMap {
    /// Dense map from a row-major coefficient slice.
    pub fn dense(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(
                "linear map needs at least one row and one column".into(),
            ));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            rows,
            cols,
            storage: Storage::Dense { entries },
            norm_sq_upper: OnceLock::new(),
        })
    }

    /// Dense map from row vectors.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter(
                "all rows must have the same length".into(),
            ));
        }
        Self::dense(m, n, rows.into_iter().flatten().collect())
    }

    /// Sparse map from `(row, col, value)` triplets; duplicate positions
    /// are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(
                "linear map needs at least one row and one column".into(),
            ));
        }
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::InvalidParameter(format!(
                    "triplet ({i}, {j}) outside a {rows}x{cols} map"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_unstable_by_key(|t| (t.0, t.1));
        // Merge duplicates.
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<usize> = merged.iter().map(|t| t.1).collect();
        let row_val: Vec<f64> = merged.iter().map(|t| t.2).collect();

        let mut by_col = merged;
        by_col.sort_unstable_by_key(|t| (t.1, t.0));
        let mut col_ptr = vec![0usize; cols + 1];
        for &(_, j, _) in &by_col {
            col_ptr[j + 1] += 1;
        }
        for j in 0..cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let row_idx: Vec<usize> = by_col.iter().map(|t| t.0).collect();
        let col_val: Vec<f64> = by_col.iter().map(|t| t.2).collect();

        Ok(Self {
            rows,
            cols,
            storage: Storage::Sparse {
                row_ptr,
                col_idx,
                row_val,
                col_ptr,
                row_idx,
                col_val,
            },
            norm_sq_upper: OnceLock::new(),
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_zero(&self) -> bool {
        match &self.storage {
            Storage::Dense { entries } => entries.iter().all(|&v| v == 0.0),
            Storage::Sparse { row_val, .. } => row_val.iter().all(|&v| v == 0.0),
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dims(self.cols, x.len())?;
        let xs = x.as_slice();
        let mut out = vec![0.0; self.rows];
        match &self.storage {
            Storage::Dense { entries } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &entries[i * self.cols..(i + 1) * self.cols];
                    *o = crate::operators::dot(row, xs);
                }
            }
            Storage::Sparse {
                row_ptr,
                col_idx,
                row_val,
                ..
            } => {
                for i in 0..self.rows {
                    let mut acc = 0.0;
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        acc += row_val[k] * xs[col_idx[k]];
                    }
                    out[i] = acc;
                }
            }
        }
        Ok(Vector::from_raw(out))
    }

    /// `A^T y`.
    pub fn apply_transpose(&self, y: &Vector) -> Result<Vector> {
        check_dims(self.rows, y.len())?;
        let ys = y.as_slice();
        let mut out = vec![0.0; self.cols];
        match &self.storage {
            Storage::Dense { entries } => {
                for j in 0..self.cols {
                    let mut acc = 0.0;
                    for i in 0..self.rows {
                        acc += entries[i * self.cols + j] * ys[i];
                    }
                    out[j] = acc;
                }
            }
            Storage::Sparse {
                col_ptr,
                row_idx,
                col_val,
                ..
            } => {
                for j in 0..self.cols {
                    let mut acc = 0.0;
                    for k in col_ptr[j]..col_ptr[j + 1] {
                        acc += col_val[k] * ys[row_idx[k]];
                    }
                    out[j] = acc;
                }
            }
        }
        Ok(Vector::from_raw(out))
    }

    /// Nonzero coefficients as `(row, col, value)` triplets in row-major
    /// order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        match &self.storage {
            Storage::Dense { entries } => {
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        let v = entries[i * self.cols + j];
                        if v != 0.0 {
                            out.push((i, j, v));
                        }
                    }
                }
            }
            Storage::Sparse {
                row_ptr,
                col_idx,
                row_val,
                ..
            } => {
                for i in 0..self.rows {
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        if row_val[k] != 0.0 {
                            out.push((i, col_idx[k], row_val[k]));
                        }
                    }
                }
            }
        }
        out
    }

    /// Row `i` as a dense vector.
    pub fn row_dense(&self, i: usize) -> Vector {
        assert!(i < self.rows, "row index out of range");
        let mut out = vec![0.0; self.cols];
        match &self.storage {
            Storage::Dense { entries } => {
                out.copy_from_slice(&entries[i * self.cols..(i + 1) * self.cols]);
            }
            Storage::Sparse {
                row_ptr,
                col_idx,
                row_val,
                ..
            } => {
                for k in row_ptr[i]..row_ptr[i + 1] {
                    out[col_idx[k]] = row_val[k];
                }
            }
        }
        Vector::from_raw(out)
    }

    /// Cached upper bound on the squared spectral norm, computed on first
    /// use with the default tolerance. When the power iteration stalls
    /// (nearly degenerate top singular values), the certified product
    /// bound takes over; it is looser but rigorous, so steps derived from
    /// it stay admissible.
    pub fn norm_sq_upper(&self) -> Result<f64> {
        if let Some(&v) = self.norm_sq_upper.get() {
            return Ok(v);
        }
        let v = match spectral_norm_sq(self, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER) {
            Ok(v) => v,
            Err(Error::PowerIterationStalled { best, .. }) => self.certified_norm_sq().max(best),
            Err(e) => return Err(e),
        };
        Ok(*self.norm_sq_upper.get_or_init(|| v))
    }

    /// `min(||A||_F^2, ||A||_1 ||A||_inf)`, both rigorous upper bounds on
    /// the squared spectral norm.
    pub fn certified_norm_sq(&self) -> f64 {
        let mut frobenius_sq = 0.0;
        let mut col_sums = vec![0.0; self.cols];
        let mut row_sums = vec![0.0; self.rows];
        let mut visit = |i: usize, j: usize, v: f64| {
            frobenius_sq += v * v;
            col_sums[j] += v.abs();
            row_sums[i] += v.abs();
        };
        match &self.storage {
            Storage::Dense { entries } => {
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        visit(i, j, entries[i * self.cols + j]);
                    }
                }
            }
            Storage::Sparse {
                row_ptr,
                col_idx,
                row_val,
                ..
            } => {
                for i in 0..self.rows {
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        visit(i, col_idx[k], row_val[k]);
                    }
                }
            }
        }
        let one = col_sums.iter().fold(0.0f64, |a, &b| a.max(b));
        let inf = row_sums.iter().fold(0.0f64, |a, &b| a.max(b));
        frobenius_sq.min(one * inf)
    }
}

/// Estimates `||A||^2` by power iteration on `A^T A`.
///
/// The start vector is pseudo-random but seeded by the map's dimensions,
/// so estimates are reproducible. Iteration stops when successive
/// Rayleigh quotients agree to within `tol` relatively; the result is
/// inflated by `1 + 10 tol` to serve as a safe upper bound for step-size
/// selection.
pub fn spectral_norm_sq(map: &LinearMap, tol: f64, max_iter: usize) -> Result<f64> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "norm tolerance must be positive, got {tol}"
        )));
    }
    if map.is_zero() {
        return Err(Error::ZeroMap);
    }
    let n = map.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(map.rows() as u64, n as u64));
    let mut v = random_unit(&mut rng, n);
    let mut rayleigh = 0.0;
    for it in 0..max_iter {
        let av = map.apply(&v)?;
        let u = map.apply_transpose(&av)?; // A^T A v
        let next = v.dot(&u)?; // ||v|| = 1, so this is the Rayleigh quotient
        let norm = u.norm();
        if norm == 0.0 {
            // v lies in the null space; restart from a fresh direction.
            v = random_unit(&mut rng, n);
            continue;
        }
        if it > 0 && (next - rayleigh).abs() <= tol * next.max(f64::MIN_POSITIVE) {
            return Ok(next * (1.0 + 10.0 * tol));
        }
        rayleigh = next;
        v = Vector::from_raw(u.iter().map(|x| x / norm).collect());
    }
    Err(Error::PowerIterationStalled {
        best: rayleigh * (1.0 + 10.0 * tol),
        iterations: max_iter,
    })
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = crate::operators::dot(&v, &v).sqrt();
        if norm > 1e-6 {
            return Vector::from_raw(v.iter().map(|x| x / norm).collect());
        }
    }
}

fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `V = I - gamma A^T (I - T) A` for an operator `T` acting on the range
/// of `A`, with `gamma` inside the open interval `(0, 1/||A||^2)`.
#[derive(Debug, Clone)]
pub struct LandweberOp {
    map: Arc<LinearMap>,
    target: OperatorNode,
    gamma: f64,
}

impl LandweberOp {
    pub fn new(map: Arc<LinearMap>, target: OperatorNode, gamma: f64) -> Result<Self> {
        let bound = map.norm_sq_upper()?;
        if !(gamma > 0.0 && gamma < 1.0 / bound) {
            return Err(Error::InvalidParameter(format!(
                "step {gamma} outside the admissible interval (0, {})",
                1.0 / bound
            )));
        }
        Ok(Self { map, target, gamma })
    }

    /// Uses the default step `0.95 / ||A||^2`.
    pub fn with_default_step(map: Arc<LinearMap>, target: OperatorNode) -> Result<Self> {
        let bound = map.norm_sq_upper()?;
        Self::new(map, target, DEFAULT_GAMMA_SCALE / bound)
    }

    pub fn map(&self) -> &Arc<LinearMap> {
        &self.map
    }

    pub fn target(&self) -> &OperatorNode {
        &self.target
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// `x - gamma A^T (Ax - T(Ax))`.
pub fn apply_landweber(op: &LandweberOp, x: &Vector) -> Result<Vector> {
    check_dims(op.map.cols(), x.len())?;
    let ax = op.map.apply(x)?;
    let tax = apply(&op.target, &ax)?;
    check_dims(ax.len(), tax.len())?;
    let residual = Vector::from_raw(
        ax.iter()
            .zip(tax.iter())
            .map(|(a, t)| a - t)
            .collect(),
    );
    let grad = op.map.apply_transpose(&residual)?;
    Ok(Vector::from_raw(
        x.iter()
            .zip(grad.iter())
            .map(|(xi, gi)| xi - op.gamma * gi)
            .collect(),
    ))
}

/// Block operator applying the range-side step first, then the
/// domain-side operator: `R(x) = U(V(x))`.
pub fn make_block_operator(u: OperatorNode, v: LandweberOp) -> OperatorNode {
    OperatorNode::Composition(vec![u, OperatorNode::landweber(v)])
}

/// `||op(x) - x||`, the displacement a single application produces.
pub fn fixed_point_residual(op: &OperatorNode, x: &Vector) -> Result<f64> {
    let y = apply(op, x)?;
    check_dims(x.len(), y.len())?;
    y.distance(x)
}
