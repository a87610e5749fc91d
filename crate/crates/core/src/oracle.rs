//! Global solution by solving the relaxation of every full integer sequence.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{MiocpInstance, Trajectory};
use crate::qp::{QpError, QpSettings, QpStatus};
use crate::relaxation::{build_relaxation, solve_qp, PartialAssignment, RelaxationError};

/// Default cap on the number of sequences.
pub const DEFAULT_SEQUENCE_LIMIT: u64 = 4096;

/// Objective difference under which two sequences count as tied.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{count} sequences exceed the limit {limit}")]
    LimitExceeded { count: String, limit: u64 },
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Minimal objective; `+∞` when no sequence is feasible.
    pub objective: f64,
    pub v: Option<Vec<Vec<i64>>>,
    pub traj: Option<Trajectory>,
    pub sequences_solved: u64,
    /// Sequences whose QP neither converged nor was proven infeasible.
    pub unresolved: u64,
}

impl OracleSolution {
    pub fn is_feasible(&self) -> bool {
        self.v.is_some()
    }
}

/// `|V|^N`, or `None` on overflow.
pub fn sequence_count(inst: &MiocpInstance) -> Option<u64> {
    let per_stage = inst.constraints.product_size()?;
    per_stage.checked_pow(u32::try_from(inst.horizon).ok()?)
}

/// The `index`-th sequence in lexicographic order (stage 0 most significant).
fn sequence(points: &[Vec<i64>], horizon: usize, mut index: u64) -> Vec<Vec<i64>> {
    let base = points.len() as u64;
    let mut seq = vec![Vec::new(); horizon];
    for k in (0..horizon).rev() {
        seq[k] = points[(index % base) as usize].clone();
        index /= base;
    }
    seq
}

/// Solves the relaxation of every full assignment and returns the best.
/// Ties within `1e-9` go to the lexicographically smallest sequence.
pub fn enumerate_solve(inst: &MiocpInstance, limit: u64, settings: &QpSettings) -> Result<OracleSolution, OracleError> {
    let count = sequence_count(inst)
        .filter(|&c| c <= limit)
        .ok_or_else(|| OracleError::LimitExceeded {
            count: sequence_count(inst).map_or_else(|| "overflowing".to_string(), |c| c.to_string()),
            limit,
        })?;
    let points = inst.constraints.integer_points();
    let results: Vec<(u64, QpStatus, f64, Trajectory)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seq = sequence(&points, inst.horizon, i);
            let rqp = build_relaxation(inst, &PartialAssignment::full(&seq))?;
            let sol = solve_qp(&rqp, settings)?;
            Ok((i, sol.status, sol.objective, sol.traj))
        })
        .collect::<Result<_, OracleError>>()?;

    let mut best: Option<(u64, f64, Trajectory)> = None;
    let mut unresolved = 0;
    for (i, status, obj, traj) in results {
        match status {
            QpStatus::Optimal => {
                if best.as_ref().is_none_or(|(_, b, _)| obj < b - TIE_TOL) {
                    best = Some((i, obj, traj));
                }
            }
            QpStatus::IterationLimit => unresolved += 1,
            QpStatus::Infeasible => {}
        }
    }
    Ok(match best {
        Some((i, obj, traj)) => OracleSolution {
            objective: obj,
            v: Some(sequence(&points, inst.horizon, i)),
            traj: Some(traj),
            sequences_solved: count,
            unresolved,
        },
        None => OracleSolution {
            objective: f64::INFINITY,
            v: None,
            traj: None,
            sequences_solved: count,
            unresolved,
        },
    })
}
