//! Quadratic storage certificates for strict dissipativity.
//!
//! A symmetric `P` with `Q + P − AᵀPA ≻ 0` certifies strict dissipativity
//! with respect to the optimal steady state, for any linear cost terms and
//! any integer set. `P` need not be definite. Candidates come from the Stein
//! equation `P − AᵀPA = εI − Q`, whose solution makes the residual exactly
//! `εI`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::MiocpInstance;
use crate::numerics::{min_eigenvalue_symmetric, solve_stein, NumericsError};

/// Relative margins tried in order; scaled by `1 + ‖Q‖_F`.
pub const EPS_SCHEDULE: [f64; 3] = [1e-2, 1e-4, 1e-6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DissipativityError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty margin schedule")]
    EmptySchedule,
    #[error(transparent)]
    Numerics(NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateStatus {
    Certified,
    NotCertified,
    /// The Stein map is singular for `A`; no verdict either way.
    IndeterminateSingular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityCertificate {
    pub p: DMatrix<f64>,
    pub eps: f64,
    /// `λ_min(Q + P − AᵀPA)`; NaN when no `P` was produced.
    pub residual_min_eig: f64,
    pub status: CertificateStatus,
}

/// `λ_min(Q + P − AᵀPA)`.
pub fn verify(a: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64, DissipativityError> {
    check_shapes(a, q)?;
    if p.shape() != a.shape() {
        return Err(DissipativityError::DimensionMismatch(format!(
            "P is {}x{}, A is {}x{}",
            p.nrows(),
            p.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let res = q + p - a.transpose() * p * a;
    let res = (&res + res.transpose()) * 0.5;
    min_eigenvalue_symmetric(&res).map_err(DissipativityError::Numerics)
}

/// Default schedule `{1e-2, 1e-4, 1e-6}·(1 + ‖Q‖_F)`.
pub fn default_schedule(q: &DMatrix<f64>) -> Vec<f64> {
    let s = 1.0 + q.norm();
    EPS_SCHEDULE.iter().map(|e| e * s).collect()
}

/// Certificate search with the default schedule.
pub fn certify(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DissipativityCertificate, DissipativityError> {
    certify_with(a, q, &default_schedule(q))
}

/// Returns the first certified margin in `schedule`. Otherwise reports the
/// last attempt, or `IndeterminateSingular` if every attempt was singular.
pub fn certify_with(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    schedule: &[f64],
) -> Result<DissipativityCertificate, DissipativityError> {
    check_shapes(a, q)?;
    if schedule.is_empty() {
        return Err(DissipativityError::EmptySchedule);
    }
    let n = a.nrows();
    let q = (q + q.transpose()) * 0.5;
    let mut last = None;
    for &eps in schedule {
        let w = DMatrix::identity(n, n) * eps - &q;
        let p = match solve_stein(a, &w) {
            Ok(sol) => sol.p,
            Err(NumericsError::Singular(_)) => continue,
            Err(e) => return Err(DissipativityError::Numerics(e)),
        };
        let residual_min_eig = verify(a, &q, &p)?;
        let status = if residual_min_eig > 0.0 {
            CertificateStatus::Certified
        } else {
            CertificateStatus::NotCertified
        };
        let cert = DissipativityCertificate {
            p,
            eps,
            residual_min_eig,
            status,
        };
        if status == CertificateStatus::Certified {
            return Ok(cert);
        }
        last = Some(cert);
    }
    Ok(last.unwrap_or_else(|| DissipativityCertificate {
        p: DMatrix::zeros(n, n),
        eps: schedule[schedule.len() - 1],
        residual_min_eig: f64::NAN,
        status: CertificateStatus::IndeterminateSingular,
    }))
}

/// Certifies `(A, Q)` of an instance, with `Q` from the nominal stage cost.
pub fn certify_instance(inst: &MiocpInstance) -> Result<DissipativityCertificate, DissipativityError> {
    certify(&inst.dynamics.a, &inst.nominal_cost().q_mat)
}

fn check_shapes(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<(), DissipativityError> {
    if !a.is_square() || q.shape() != a.shape() {
        return Err(DissipativityError::DimensionMismatch(format!(
            "A is {}x{}, Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(())
}
