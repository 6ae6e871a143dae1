//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Largest matrix dimension for which the spectral norm is taken from a full SVD.
const EXACT_SVD_LIMIT: usize = 64;

/// Largest singular value of `m`.
///
/// Uses a full SVD when the smaller dimension is at most 64 and power
/// iteration on `MᵀM` from the all-ones start vector otherwise.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    if m.nrows().min(m.ncols()) <= EXACT_SVD_LIMIT {
        return m.singular_values().max();
    }
    power_iteration_norm(m)
}

fn power_iteration_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let mut v = DVector::from_element(gram.ncols(), 1.0 / (gram.ncols() as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (norm - estimate).abs() <= 1e-14 * norm {
            estimate = norm;
            break;
        }
        estimate = norm;
    }
    estimate.sqrt()
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

/// Validates that `m` is square, symmetric to 1e-12 (relative to its largest
/// entry) and positive definite. Returns its extreme eigenvalues.
pub fn validate_spd(m: &DMatrix<f64>, name: &'static str) -> Result<(f64, f64)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: name,
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric {
            matrix: name,
            asymmetry: asym,
        });
    }
    let (lo, hi) = symmetric_extremes(m);
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite {
            matrix: name,
            min_eigenvalue: lo,
        });
    }
    Ok((lo, hi))
}

pub fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
