//! Small dense linear-algebra kernels.

mod ldlt;
mod lu;
mod stein;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

pub use ldlt::{solve_symmetric_indefinite, SymmetricIndefiniteFactor, ZERO_PIVOT_REGULARIZATION};
pub use lu::DenseLu;
pub use stein::{solve_stein, SteinSolution, STEIN_RCOND_MIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("singular system: {0}")]
    Singular(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Smallest eigenvalue of a symmetric matrix (tridiagonalization + implicit
/// QL/QR sweeps). Only the lower triangle is read.
pub fn min_eigenvalue_symmetric(m: &DMatrix<f64>) -> Result<f64, NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    if m.is_empty() {
        return Ok(f64::INFINITY);
    }
    let sym = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i >= j { m[(i, j)] } else { m[(j, i)] });
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| NumericsError::Singular("eigenvalue iteration did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}
