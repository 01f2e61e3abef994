//! Numerical kernels shared by the SQL function table and the model layer.
//!
//! Densities are evaluated in log space through a Cholesky factorization of
//! the covariance (never an explicit inverse). A factorization that fails is
//! retried once with a ridge `λI`, `λ = 1e-6 · trace(cov) / d`; a second
//! failure is an error. Densities are floored at [`DENSITY_FLOOR`] so that
//! responsibility normalization never divides by zero.

use crate::types::Matrix;
use thiserror::Error;

/// Smallest density ever returned; keeps responsibilities strictly positive.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("covariance is not positive definite (even after ridge regularization)")]
    NonPositiveDefinite,
    #[error("normal matrix is singular (even after ridge regularization)")]
    SingularDesign,
    #[error("standard deviation must be positive, got {0}")]
    InvalidStdDev(f64),
    #[error("entries do not form a probability vector: {0}")]
    NotAProbabilityVector(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

type Chol = nalgebra::Cholesky<f64, nalgebra::Dyn>;

fn try_cholesky(m: &Matrix) -> Option<Chol> {
    nalgebra::DMatrix::from_row_slice(m.dim(), m.dim(), m.data()).cholesky()
}

/// Factors `m`, retrying once with the ridge described in the module docs.
fn factor_with_ridge(m: &Matrix) -> Option<Chol> {
    if let Some(c) = try_cholesky(m) {
        return Some(c);
    }
    let lambda = 1e-6 * m.trace() / m.dim() as f64;
    if !(lambda > 0.0) {
        return None;
    }
    let mut ridged = m.clone();
    for i in 0..m.dim() {
        ridged[(i, i)] += lambda;
    }
    try_cholesky(&ridged)
}

fn log_det(chol: &Chol) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
}

/// Solves `m u = z` through an existing factorization and returns `zᵀ m⁻¹ z`.
fn quad_form(chol: &Chol, z: &[f64]) -> f64 {
    let zv = nalgebra::DVector::from_column_slice(z);
    let u = chol.solve(&zv);
    zv.dot(&u)
}

/// Multivariate normal density `N(x | mean, cov)`, floored at
/// [`DENSITY_FLOOR`].
pub fn norm_pdf(x: &[f64], mean: &[f64], cov: &Matrix) -> Result<f64, KernelError> {
    let d = x.len();
    if mean.len() != d || cov.dim() != d {
        return Err(KernelError::DimensionMismatch(format!(
            "norm: x has {} entries, mean {}, cov is {}x{}",
            d,
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let chol = factor_with_ridge(cov).ok_or(KernelError::NonPositiveDefinite)?;
    let z: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let log_p = -0.5
        * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det(&chol) + quad_form(&chol, &z));
    Ok(log_p.exp().max(DENSITY_FLOOR))
}

/// One-dimensional normal density `N(x | mean, sd)` parameterized by the
/// standard deviation, floored at [`DENSITY_FLOOR`].
pub fn norm_pdf_1d(x: f64, mean: f64, sd: f64) -> Result<f64, KernelError> {
    if !(sd > 0.0) {
        return Err(KernelError::InvalidStdDev(sd));
    }
    let z = (x - mean) / sd;
    let log_p = -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * z * z;
    Ok(log_p.exp().max(DENSITY_FLOOR))
}

/// Mahalanobis distance `sqrt((x-mean)ᵀ cov⁻¹ (x-mean))`.
pub fn mahalanobis(x: &[f64], mean: &[f64], cov: &Matrix) -> Result<f64, KernelError> {
    let d = x.len();
    if mean.len() != d || cov.dim() != d {
        return Err(KernelError::DimensionMismatch(format!(
            "mahalanobis: x has {} entries, mean {}, cov is {}x{}",
            d,
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let chol = factor_with_ridge(cov).ok_or(KernelError::NonPositiveDefinite)?;
    let z: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    Ok(quad_form(&chol, &z).max(0.0).sqrt())
}

/// Shannon entropy `-Σ p ln p` in nats, with `0 ln 0 := 0`. The input must
/// be non-negative and sum to 1 within 1e-9.
pub fn entropy(p: &[f64]) -> Result<f64, KernelError> {
    if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0)) {
        return Err(KernelError::NotAProbabilityVector(format!("negative entry {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(KernelError::NotAProbabilityVector(format!("entries sum to {total}")));
    }
    Ok(p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum())
}

/// Softmax with max-subtraction. The exponentials are summed in sorted
/// order, so permuting the logits permutes the gates bit-exactly.
pub fn softmax_gate(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let mut sorted = exps.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let denom: f64 = sorted.iter().sum();
    exps.iter().map(|&e| e / denom).collect()
}

/// Solves the symmetric positive-definite system `a u = b`, with the same
/// single ridge retry as the density path.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, KernelError> {
    if b.len() != a.dim() {
        return Err(KernelError::DimensionMismatch(format!(
            "solve: matrix is {}x{}, vector has {} entries",
            a.dim(),
            a.dim(),
            b.len()
        )));
    }
    let chol = factor_with_ridge(a).ok_or(KernelError::SingularDesign)?;
    let u = chol.solve(&nalgebra::DVector::from_column_slice(b));
    Ok(u.iter().cloned().collect())
}

/// Weighted least squares `argmin_β Σ w_i (y_i - x_iᵀβ)²` via the normal
/// equations. `None` weights mean all ones.
pub fn least_squares(
    rows: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>, KernelError> {
    if rows.len() != y.len() {
        return Err(KernelError::DimensionMismatch(format!(
            "least_squares: {} design rows but {} targets",
            rows.len(),
            y.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return Err(KernelError::DimensionMismatch(format!(
                "least_squares: {} weights but {} targets",
                w.len(),
                y.len()
            )));
        }
    }
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    if d == 0 {
        return Err(KernelError::DimensionMismatch("least_squares: empty design".into()));
    }
    let mut a = Matrix::zeros(d);
    let mut b = vec![0.0; d];
    for (i, x) in rows.iter().enumerate() {
        if x.len() != d {
            return Err(KernelError::DimensionMismatch(format!(
                "least_squares: design row {i} has {} entries, expected {d}",
                x.len()
            )));
        }
        let w = weights.map(|w| w[i]).unwrap_or(1.0);
        for r in 0..d {
            let wx = w * x[r];
            for c in 0..d {
                a[(r, c)] += wx * x[c];
            }
            b[r] += wx * y[i];
        }
    }
    solve_spd(&a, &b)
}

/// Adds `var_floor · I` when any marginal variance falls below `var_floor`;
/// otherwise returns the matrix unchanged. This is the covariance analogue
/// of flooring a 1-d standard deviation.
pub fn regularize_cov(cov: &Matrix, var_floor: f64) -> Matrix {
    let degenerate = (0..cov.dim()).any(|i| cov[(i, i)] < var_floor);
    if !degenerate {
        return cov.clone();
    }
    let mut out = cov.clone();
    for i in 0..cov.dim() {
        out[(i, i)] += var_floor;
    }
    out
}

pub fn dot(u: &[f64], v: &[f64]) -> Result<f64, KernelError> {
    if u.len() != v.len() {
        return Err(KernelError::DimensionMismatch(format!(
            "dot: lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).sum())
}
