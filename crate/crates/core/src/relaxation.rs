//! Continuous relaxation of an instance under a partial integer assignment.
//!
//! Fixed stages substitute their integer vector into dynamics, cost and mixed
//! rows. Relaxed stages carry `v(k)` as a continuous variable bounded by the
//! per-channel hull `[min V_j, max V_j]`. The initial state is folded into
//! the stage-0 constants, so `x(0)` is not a decision variable.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{simulate, MiocpInstance, Trajectory};
use crate::qp::{self, KktSystem, QpError, QpSettings, QpStage, QpStatus, StageQp};

/// Integer decision of one stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageAssignment {
    Fixed(Vec<i64>),
    Relaxed,
}

impl StageAssignment {
    pub fn fixed(&self) -> Option<&[i64]> {
        match self {
            Self::Fixed(v) => Some(v),
            Self::Relaxed => None,
        }
    }
}

/// One [`StageAssignment`] per stage `0..N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PartialAssignment {
    pub entries: Vec<StageAssignment>,
}

impl PartialAssignment {
    pub fn relaxed(horizon: usize) -> Self {
        Self {
            entries: vec![StageAssignment::Relaxed; horizon],
        }
    }

    pub fn full(seq: &[Vec<i64>]) -> Self {
        Self {
            entries: seq.iter().cloned().map(StageAssignment::Fixed).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> &StageAssignment {
        &self.entries[k]
    }

    /// Number of fixed integer components (`n_v` per fixed stage).
    pub fn fixed_components(&self) -> usize {
        self.entries.iter().filter_map(|e| e.fixed()).map(|v| v.len()).sum()
    }

    pub fn is_fully_fixed(&self) -> bool {
        self.entries.iter().all(|e| e.fixed().is_some())
    }

    /// Copy with stage `k` fixed to `v`.
    pub fn with_fixed(&self, k: usize, v: Vec<i64>) -> Self {
        let mut out = self.clone();
        out.entries[k] = StageAssignment::Fixed(v);
        out
    }
}

impl fmt::Display for PartialAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, e) in self.entries.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            match e {
                StageAssignment::Relaxed => write!(f, "*")?,
                StageAssignment::Fixed(v) if v.len() == 1 => write!(f, "{}", v[0])?,
                StageAssignment::Fixed(v) => write!(f, "{v:?}")?,
            }
        }
        write!(f, "]")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxationError {
    #[error("assignment has {got} stages, horizon is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("stage {stage}: {value:?} is not in the integer set")]
    NotMember { stage: usize, value: Vec<i64> },
}

/// The relaxed problem as a stage-structured QP plus what is needed to map
/// its solution back onto a [`Trajectory`].
#[derive(Debug, Clone)]
pub struct RelaxationQp {
    pub qp: StageQp,
    /// Set when a row without decision variables is violated.
    pub trivially_infeasible: bool,
    assignment: PartialAssignment,
    x0: DVector<f64>,
    nu: usize,
    nv: usize,
}

/// Slack allowed on rows that reduce to constants after substitution.
const CONSTANT_ROW_TOL: f64 = 1e-9;

/// Collects `≤` rows of one stage, then installs them in a single pass.
struct RowSink<'a> {
    infeasible: &'a mut bool,
    nx: usize,
    nw: usize,
    cx: Vec<f64>,
    cw: Vec<f64>,
    d: Vec<f64>,
}

impl<'a> RowSink<'a> {
    fn new(stage: &QpStage, infeasible: &'a mut bool) -> Self {
        Self {
            infeasible,
            nx: stage.nx(),
            nw: stage.nw(),
            cx: Vec::new(),
            cw: Vec::new(),
            d: Vec::new(),
        }
    }

    /// Row `sign·(cxᵀx + cwᵀw) ≤ d`; `cx` and `cw` may be short.
    fn push(&mut self, cx: &[f64], cw: &[f64], sign: f64, d: f64) {
        let pad = |dst: &mut Vec<f64>, src: &[f64], width: usize| {
            dst.extend(src.iter().map(|c| sign * c));
            dst.extend(std::iter::repeat_n(0.0, width - src.len()));
        };
        pad(&mut self.cx, cx, self.nx);
        pad(&mut self.cw, cw, self.nw);
        self.d.push(d);
    }

    /// Adds `lo ≤ cxᵀx + cwᵀw + offset ≤ hi`, dropping infinite sides.
    fn two_sided(&mut self, cx: &[f64], cw: &[f64], offset: f64, lo: f64, hi: f64) {
        let constant = cx.iter().chain(cw).all(|&c| c == 0.0);
        if hi.is_finite() {
            let d = hi - offset;
            if constant {
                *self.infeasible |= d < -CONSTANT_ROW_TOL * (1.0 + hi.abs());
            } else {
                self.push(cx, cw, 1.0, d);
            }
        }
        if lo.is_finite() {
            let d = offset - lo;
            if constant {
                *self.infeasible |= d < -CONSTANT_ROW_TOL * (1.0 + lo.abs());
            } else {
                self.push(cx, cw, -1.0, d);
            }
        }
    }

    fn install(self, stage: &mut QpStage) {
        let m = self.d.len();
        stage.c_x = DMatrix::from_row_slice(m, self.nx, &self.cx);
        stage.c_w = DMatrix::from_row_slice(m, self.nw, &self.cw);
        stage.d = DVector::from_vec(self.d);
    }
}

/// Builds the relaxed QP for `pa`.
pub fn build_relaxation(inst: &MiocpInstance, pa: &PartialAssignment) -> Result<RelaxationQp, RelaxationError> {
    let n = inst.horizon;
    if pa.len() != n {
        return Err(RelaxationError::LengthMismatch {
            expected: n,
            got: pa.len(),
        });
    }
    let (nx, nu, nv) = (inst.nx(), inst.nu(), inst.nv());
    let cons = &inst.constraints;
    for (k, e) in pa.entries.iter().enumerate() {
        if let Some(v) = e.fixed() {
            if v.len() != nv || !cons.v_member(v) {
                return Err(RelaxationError::NotMember {
                    stage: k,
                    value: v.to_vec(),
                });
            }
        }
    }

    let dynm = &inst.dynamics;
    let x0 = &inst.x0;
    let mut constant = 0.0;
    let mut infeasible = false;
    let mut stages = Vec::with_capacity(n + 1);
    for k in 0..n {
        let cost = &inst.stage_costs[k];
        let fixed = pa
            .get(k)
            .fixed()
            .map(|v| DVector::from_iterator(nv, v.iter().map(|&i| i as f64)));
        let sx = if k == 0 { 0 } else { nx };
        let sw = nu + if fixed.is_some() { 0 } else { nv };
        let mut st = QpStage::empty(sx, sw);

        // Cost.
        let r = &cost.r_mat;
        let r_u = cost.r_vec.rows(0, nu);
        let r_v = cost.r_vec.rows(nu, nv);
        match &fixed {
            Some(vbar) => {
                let ruu = r.view((0, 0), (nu, nu));
                let ruv = r.view((0, nu), (nu, nv));
                let rvv = r.view((nu, nu), (nv, nv));
                st.h_ww = ruu * 2.0;
                st.g_w = r_u + ruv * vbar * 2.0;
                constant += vbar.dot(&(rvv * vbar)) + r_v.dot(vbar);
            }
            None => {
                st.h_ww = r * 2.0;
                st.g_w = cost.r_vec.clone();
            }
        }
        if k == 0 {
            constant += x0.dot(&(&cost.q_mat * x0)) + cost.q_vec.dot(x0);
        } else {
            st.h_xx = &cost.q_mat * 2.0;
            st.g_x = cost.q_vec.clone();
        }
        constant += cost.constant;

        // Link to stage k+1.
        st.a = if k == 0 { DMatrix::zeros(nx, 0) } else { dynm.a.clone() };
        st.b = DMatrix::zeros(nx, sw);
        st.b.columns_mut(0, nu).copy_from(&dynm.b1);
        st.f = dynm.offset.clone();
        match &fixed {
            Some(vbar) => st.f += &dynm.b2 * vbar,
            None => st.b.columns_mut(nu, nv).copy_from(&dynm.b2),
        }
        if k == 0 {
            st.f += &dynm.a * x0;
        }

        // Rows.
        let mut sink = RowSink::new(&st, &mut infeasible);
        let unit = |len: usize, j: usize| {
            let mut e = vec![0.0; len];
            e[j] = 1.0;
            e
        };
        for i in 0..nx {
            let (lo, hi) = (cons.x_bounds.lo[i], cons.x_bounds.hi[i]);
            if k == 0 {
                sink.two_sided(&[], &vec![0.0; sw], x0[i], lo, hi);
            } else {
                sink.two_sided(&unit(nx, i), &vec![0.0; sw], 0.0, lo, hi);
            }
        }
        for i in 0..nu {
            sink.two_sided(
                &vec![0.0; sx],
                &unit(sw, i),
                0.0,
                cons.u_bounds.lo[i],
                cons.u_bounds.hi[i],
            );
        }
        if fixed.is_none() {
            for j in 0..nv {
                let (lo, hi) = cons.channel_hull(j);
                sink.two_sided(&vec![0.0; sx], &unit(sw, nu + j), 0.0, lo as f64, hi as f64);
            }
        }
        for row in &cons.mixed {
            let mut offset = 0.0;
            let cx: Vec<f64> = if k == 0 {
                offset += row.gx.dot(x0);
                Vec::new()
            } else {
                row.gx.iter().copied().collect()
            };
            let mut cw: Vec<f64> = row.gu.iter().copied().collect();
            match &fixed {
                Some(vbar) => offset += row.gv.dot(vbar),
                None => cw.extend(row.gv.iter().copied()),
            }
            sink.two_sided(&cx, &cw, offset, row.lo, row.hi);
        }
        sink.install(&mut st);
        stages.push(st);
    }

    // Terminal stage: x(N) only.
    let mut st = QpStage::empty(nx, 0);
    st.h_xx = &inst.terminal_cost.q_mat * 2.0;
    st.g_x = inst.terminal_cost.q_vec.clone();
    constant += inst.terminal_cost.constant;
    let mut sink = RowSink::new(&st, &mut infeasible);
    for i in 0..nx {
        let mut e = vec![0.0; nx];
        e[i] = 1.0;
        sink.two_sided(&e, &[], 0.0, cons.x_bounds.lo[i], cons.x_bounds.hi[i]);
    }
    sink.install(&mut st);
    stages.push(st);

    Ok(RelaxationQp {
        qp: StageQp::new(stages, constant),
        trivially_infeasible: infeasible,
        assignment: pa.clone(),
        x0: x0.clone(),
        nu,
        nv,
    })
}

impl RelaxationQp {
    pub fn assignment(&self) -> &PartialAssignment {
        &self.assignment
    }

    /// Maps a QP point onto states and inputs.
    pub fn trajectory(&self, z: &DVector<f64>) -> Trajectory {
        let n = self.assignment.len();
        let stages = self.qp.stages();
        let mut x = vec![self.x0.clone()];
        let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let off = self.qp.var_offset(k) + stages[k].nx();
            u.push(z.rows(off, self.nu).into_owned());
            v.push(match self.assignment.get(k).fixed() {
                Some(f) => DVector::from_iterator(self.nv, f.iter().map(|&i| i as f64)),
                None => z.rows(off + self.nu, self.nv).into_owned(),
            });
            let next = self.qp.var_offset(k + 1);
            x.push(z.rows(next, stages[k + 1].nx()).into_owned());
        }
        Trajectory { x, u, v }
    }
}

/// Result of one relaxed solve.
#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub status: QpStatus,
    /// `J*(V)`; `+∞` when infeasible.
    pub objective: f64,
    pub traj: Trajectory,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Solves a relaxation built by [`build_relaxation`].
pub fn solve_qp(rqp: &RelaxationQp, settings: &QpSettings) -> Result<RelaxedSolution, QpError> {
    if rqp.trivially_infeasible {
        rqp.qp.check_convex()?;
        return Ok(RelaxedSolution {
            status: QpStatus::Infeasible,
            objective: f64::INFINITY,
            traj: rqp.trajectory(&rqp.qp.initial_point()),
            kkt_residual: f64::INFINITY,
            iterations: 0,
        });
    }
    let out = qp::solve(&rqp.qp, settings)?;
    Ok(RelaxedSolution {
        status: out.status,
        objective: out.objective,
        traj: rqp.trajectory(&out.z),
        kkt_residual: out.kkt_residual,
        iterations: out.iterations,
    })
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// [`build_relaxation`] followed by [`solve_qp`].
pub fn solve_relaxation(
    inst: &MiocpInstance,
    pa: &PartialAssignment,
    settings: &QpSettings,
) -> Result<RelaxedSolution, SolveError> {
    Ok(solve_qp(&build_relaxation(inst, pa)?, settings)?)
}

/// Nearest channel member to `x`, if within `tol`.
fn snap(set: &[i64], x: f64, tol: f64) -> Option<i64> {
    set.iter().copied().find(|&m| (m as f64 - x).abs() <= tol)
}

/// Integer sequence of `traj` when every `v(k)` component lies within `tol`
/// of its channel set.
pub fn round_integer(traj: &Trajectory, inst: &MiocpInstance, tol: f64) -> Option<Vec<Vec<i64>>> {
    let sets = &inst.constraints.v_sets;
    traj.v
        .iter()
        .map(|vk| {
            vk.iter()
                .zip(sets)
                .map(|(&x, set)| snap(set, x, tol))
                .collect::<Option<Vec<i64>>>()
        })
        .collect()
}

/// True iff every `v(k)` component is within `tol` of its channel set.
pub fn is_integer_feasible(sol: &RelaxedSolution, inst: &MiocpInstance, tol: f64) -> bool {
    round_integer(&sol.traj, inst, tol).is_some()
}

/// Simulates `sol`'s inputs with `v` replaced by the given integers.
pub fn resimulate(inst: &MiocpInstance, sol: &RelaxedSolution, v: &[Vec<i64>]) -> Trajectory {
    let vs: Vec<DVector<f64>> = v
        .iter()
        .map(|vk| DVector::from_iterator(vk.len(), vk.iter().map(|&i| i as f64)))
        .collect();
    simulate(inst, &sol.traj.u, &vs).expect("solution dimensions match the instance")
}
