//! Correlation-matrix parameterization through standardized Cholesky factors
//! of the precision matrix.
//!
//! An unconstrained vector `lambda` fills the strict lower triangle of a
//! unit lower-triangular matrix. Standardizing its columns yields a factor
//! whose Gram matrix is the precision of a correlation matrix, so every
//! finite `lambda` maps to a valid (unit-diagonal, positive definite)
//! correlation matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TdaError};

/// A correlation matrix together with the unconstrained parameters and the
/// derived factors used by likelihood evaluation.
#[derive(Debug, Clone)]
pub struct CorrelationParam {
    /// Unconstrained strict lower-triangle entries, row-major.
    pub lambda: Vec<f64>,
    /// Unit lower-triangular matrix holding `lambda`.
    pub unit_lower: DMatrix<f64>,
    /// Standardized Cholesky factor of the precision matrix (lower
    /// triangular, positive diagonal).
    pub std_cholesky: DMatrix<f64>,
    /// The correlation matrix.
    pub sigma: DMatrix<f64>,
    /// Its inverse (the precision matrix).
    pub sigma_inv: DMatrix<f64>,
    /// Log-determinant of the correlation matrix.
    pub log_det_sigma: f64,
}

/// Number of markers implied by a packed lower-triangle length.
pub fn dim_from_lambda_len(len: usize) -> usize {
    let j = (1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0;
    let j = j.round() as usize;
    assert_eq!(j * (j - 1) / 2, len, "lambda length must be J(J-1)/2");
    j
}

/// Inverts a lower-triangular matrix by forward substitution.
fn lower_triangular_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = 1.0 / l[(col, col)];
        for row in col + 1..n {
            let mut s = 0.0;
            for k in col..row {
                s += l[(row, k)] * inv[(k, col)];
            }
            inv[(row, col)] = -s / l[(row, row)];
        }
    }
    inv
}

/// Builds the correlation parameterization from unconstrained parameters.
///
/// Total on finite input: every finite `lambda` yields a positive definite
/// unit-diagonal correlation matrix.
pub fn corr_from_lambda(lambda: &[f64]) -> CorrelationParam {
    let j = if lambda.is_empty() {
        1
    } else {
        dim_from_lambda_len(lambda.len())
    };
    let mut unit_lower = DMatrix::identity(j, j);
    let mut idx = 0;
    for row in 1..j {
        for col in 0..row {
            unit_lower[(row, col)] = lambda[idx];
            idx += 1;
        }
    }
    let inv = lower_triangular_inverse(&unit_lower);
    // m = L^{-1} L^{-T}; its diagonal gives the column standardization.
    let m = &inv * inv.transpose();
    let scale: Vec<f64> = (0..j).map(|k| m[(k, k)].sqrt()).collect();
    let mut std_cholesky = unit_lower.clone();
    for col in 0..j {
        for row in col..j {
            std_cholesky[(row, col)] *= scale[col];
        }
    }
    // sigma = D^{-1} m D^{-1} has exact unit diagonal by construction.
    let mut sigma = m.clone();
    for row in 0..j {
        for col in 0..j {
            sigma[(row, col)] /= scale[row] * scale[col];
        }
    }
    let sigma_inv = std_cholesky.transpose() * &std_cholesky;
    let log_det_sigma = -2.0 * scale.iter().map(|s| s.ln()).sum::<f64>();
    CorrelationParam {
        lambda: lambda.to_vec(),
        unit_lower,
        std_cholesky,
        sigma,
        sigma_inv,
        log_det_sigma,
    }
}

/// Recovers the unconstrained parameters that reproduce a given correlation
/// matrix; the inverse of [`corr_from_lambda`].
pub fn lambda_from_corr(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let j = sigma.nrows();
    if j != sigma.ncols() {
        return Err(TdaError::InvalidArgument("correlation matrix must be square".into()));
    }
    if j == 1 {
        return Ok(Vec::new());
    }
    let prec = sigma
        .clone()
        .cholesky()
        .ok_or(TdaError::SingularCovariance)?
        .inverse();
    // Want lower-triangular T with T' T = prec: reverse-permute, factor,
    // permute back. Reversal of an upper-triangular matrix in both indices
    // is lower triangular.
    let mut rev = DMatrix::zeros(j, j);
    for r in 0..j {
        for c in 0..j {
            rev[(r, c)] = prec[(j - 1 - r, j - 1 - c)];
        }
    }
    let chol = rev
        .cholesky()
        .ok_or(TdaError::SingularCovariance)?
        .l()
        .transpose();
    let mut std_chol = DMatrix::zeros(j, j);
    for r in 0..j {
        for c in 0..j {
            std_chol[(r, c)] = chol[(j - 1 - r, j - 1 - c)];
        }
    }
    let mut lambda = Vec::with_capacity(j * (j - 1) / 2);
    for row in 1..j {
        for col in 0..row {
            lambda.push(std_chol[(row, col)] / std_chol[(col, col)]);
        }
    }
    Ok(lambda)
}

impl CorrelationParam {
    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Quadratic form `h' Sigma^{-1} h` evaluated as the squared norm of the
    /// standardized factor applied to `h`.
    pub fn quad_form(&self, h: &DVector<f64>) -> f64 {
        (&self.std_cholesky * h).norm_squared()
    }
}
