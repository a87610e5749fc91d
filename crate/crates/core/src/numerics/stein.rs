//! Stein equation `P − AᵀPA = W` by vectorization.
//!
//! The symmetric unknown is packed into its `n(n+1)/2` upper-triangular
//! entries and the linear map `P ↦ P − AᵀPA` is assembled densely. Assembly
//! costs O(n⁴) and the LU solve O(n⁶), which is fine for the n ≲ 100
//! systems this crate targets.

use nalgebra::DMatrix;

use super::{DenseLu, NumericsError};

/// Reciprocal condition below which the Stein map is treated as singular.
pub const STEIN_RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SteinSolution {
    pub p: DMatrix<f64>,
    /// `‖P − AᵀPA − W‖_F`.
    pub residual_norm: f64,
}

fn packed(i: usize, j: usize, n: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Unique symmetric `P` with `P − AᵀPA = W`.
///
/// The map is singular exactly when `λᵢ(A)λⱼ(A) = 1` for some pair of
/// eigenvalues; this is reported as [`NumericsError::Singular`].
pub fn solve_stein(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<SteinSolution, NumericsError> {
    let n = a.nrows();
    if !a.is_square() || w.shape() != (n, n) {
        return Err(NumericsError::DimensionMismatch(format!(
            "A is {}x{}, W is {}x{}",
            a.nrows(),
            a.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    if a.iter().chain(w.iter()).any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let w = (w + w.transpose()) * 0.5;
    let m = n * (n + 1) / 2;
    let mut map = DMatrix::zeros(m, m);
    let mut rhs = nalgebra::DVector::zeros(m);
    for i in 0..n {
        for j in i..n {
            let row = packed(i, j, n);
            rhs[row] = w[(i, j)];
            map[(row, row)] += 1.0;
            // (AᵀPA)_ij = Σ_kl A_ki P_kl A_lj
            for k in 0..n {
                let aki = a[(k, i)];
                if aki == 0.0 {
                    continue;
                }
                for l in 0..n {
                    let alj = a[(l, j)];
                    if alj != 0.0 {
                        map[(row, packed(k, l, n))] -= aki * alj;
                    }
                }
            }
        }
    }

    let lu = DenseLu::new(map).map_err(|e| match e {
        NumericsError::Singular(msg) => NumericsError::Singular(format!("Stein map: {msg}")),
        other => other,
    })?;
    let rcond = lu.rcond();
    if rcond < STEIN_RCOND_MIN {
        return Err(NumericsError::Singular(format!(
            "Stein map reciprocal condition {rcond:.3e}"
        )));
    }
    let sol = lu.solve(&rhs);
    let p = DMatrix::from_fn(n, n, |i, j| sol[packed(i, j, n)]);
    let residual_norm = (&p - a.transpose() * &p * a - &w).norm();
    Ok(SteinSolution { p, residual_norm })
}
