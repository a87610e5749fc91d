//! Linear-quadratic mixed-integer optimal control problems.
//!
//! An instance couples linear dynamics
//!
//! ```text
//! x(k+1) = A x(k) + B1 u(k) + B2 v(k) + c
//! ```
//!
//! with stagewise quadratic-plus-linear costs, stage-invariant box and mixed
//! constraints, and a finite integer set per channel of `v`. All matrices are
//! dense; the intended sizes are a few dozen states over horizons of up to a
//! hundred steps.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// `x⁺ = A x + B1 u + B2 v + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    /// Constant drift term; zero for purely linear systems.
    pub offset: DVector<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b1: DMatrix<f64>, b2: DMatrix<f64>) -> Self {
        let offset = DVector::zeros(a.nrows());
        Self { a, b1, b2, offset }
    }

    pub fn with_offset(mut self, offset: DVector<f64>) -> Self {
        self.offset = offset;
        self
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b1.ncols()
    }

    pub fn nv(&self) -> usize {
        self.b2.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b1 * u + &self.b2 * v + &self.offset
    }
}

/// `ℓ(x, u, v) = xᵀQx + wᵀRw + qᵀx + rᵀw + constant` with `w = (u, v)`.
///
/// `Q` and `R` are symmetrized on construction. Indefinite matrices are
/// accepted here; convexity is only demanded by the relaxation solver.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCost {
    pub q_mat: DMatrix<f64>,
    pub r_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub r_vec: DVector<f64>,
    pub constant: f64,
}

impl StageCost {
    pub fn new(
        q_mat: DMatrix<f64>,
        r_mat: DMatrix<f64>,
        q_vec: DVector<f64>,
        r_vec: DVector<f64>,
        constant: f64,
    ) -> Self {
        Self {
            q_mat: symmetrize(q_mat),
            r_mat: symmetrize(r_mat),
            q_vec,
            r_vec,
            constant,
        }
    }

    pub fn zeros(nx: usize, nw: usize) -> Self {
        Self {
            q_mat: DMatrix::zeros(nx, nx),
            r_mat: DMatrix::zeros(nw, nw),
            q_vec: DVector::zeros(nx),
            r_vec: DVector::zeros(nw),
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let w = stack(u, v);
        x.dot(&(&self.q_mat * x)) + w.dot(&(&self.r_mat * &w)) + self.q_vec.dot(x) + self.r_vec.dot(&w) + self.constant
    }
}

/// Terminal cost `V_f(x) = xᵀQx + qᵀx + constant` on the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCost {
    pub q_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub constant: f64,
}

impl TerminalCost {
    pub fn new(q_mat: DMatrix<f64>, q_vec: DVector<f64>, constant: f64) -> Self {
        Self {
            q_mat: symmetrize(q_mat),
            q_vec,
            constant,
        }
    }

    pub fn zeros(nx: usize) -> Self {
        Self::new(DMatrix::zeros(nx, nx), DVector::zeros(nx), 0.0)
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q_mat * x)) + self.q_vec.dot(x) + self.constant
    }
}

/// One row `lo ≤ gxᵀx + guᵀu + gvᵀv ≤ hi`, imposed at every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedRow {
    pub gx: DVector<f64>,
    pub gu: DVector<f64>,
    pub gv: DVector<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl MixedRow {
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.gx.dot(x) + self.gu.dot(u) + self.gv.dot(v)
    }
}

/// Elementwise box `lo ≤ x ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl BoxSet {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lo: DVector::from_element(n, f64::NEG_INFINITY),
            hi: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.lo.len()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(xi, (lo, hi))| *xi >= lo - tol && *xi <= hi + tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub x_bounds: BoxSet,
    pub u_bounds: BoxSet,
    /// Per-channel integer sets; `V` is their Cartesian product.
    pub v_sets: Vec<Vec<i64>>,
    pub mixed: Vec<MixedRow>,
}

impl ConstraintSet {
    pub fn unbounded(nx: usize, nu: usize, v_sets: Vec<Vec<i64>>) -> Self {
        Self {
            x_bounds: BoxSet::unbounded(nx),
            u_bounds: BoxSet::unbounded(nu),
            v_sets,
            mixed: Vec::new(),
        }
    }

    /// Convex hull of channel `j` as `(min, max)`.
    pub fn channel_hull(&self, j: usize) -> (i64, i64) {
        let set = &self.v_sets[j];
        (set[0], set[set.len() - 1])
    }

    /// `|V|`, or `None` on overflow.
    pub fn product_size(&self) -> Option<u64> {
        self.v_sets
            .iter()
            .try_fold(1u64, |acc, s| acc.checked_mul(s.len() as u64))
    }

    /// Every element of `V` in lexicographic order.
    pub fn integer_points(&self) -> Vec<Vec<i64>> {
        let mut out = vec![Vec::with_capacity(self.v_sets.len())];
        for set in &self.v_sets {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    set.iter().map(move |&value| {
                        let mut p = prefix.clone();
                        p.push(value);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn v_member(&self, v: &[i64]) -> bool {
        v.len() == self.v_sets.len() && v.iter().zip(&self.v_sets).all(|(x, set)| set.binary_search(x).is_ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiocpInstance {
    pub dynamics: LinearDynamics,
    /// One cost per stage `0..N`; later stages may override the nominal one.
    pub stage_costs: Vec<StageCost>,
    pub terminal_cost: TerminalCost,
    pub constraints: ConstraintSet,
    pub horizon: usize,
    pub x0: DVector<f64>,
    pub x0_set: Option<BoxSet>,
}

impl MiocpInstance {
    pub fn nx(&self) -> usize {
        self.dynamics.nx()
    }

    pub fn nu(&self) -> usize {
        self.dynamics.nu()
    }

    pub fn nv(&self) -> usize {
        self.dynamics.nv()
    }

    /// The stage cost that defines the stationary problem.
    pub fn nominal_cost(&self) -> &StageCost {
        &self.stage_costs[0]
    }

    pub fn with_x0(&self, x0: DVector<f64>) -> Self {
        Self { x0, ..self.clone() }
    }

    /// Re-horizon the instance. Interior stages reuse the nominal cost; a
    /// distinct last-stage cost, when present, stays on the last stage.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        assert!(horizon >= 1, "horizon must be at least one");
        let nominal = self.stage_costs[0].clone();
        let last = self.stage_costs.last().cloned().unwrap_or_else(|| nominal.clone());
        let mut stage_costs = vec![nominal.clone(); horizon];
        if last != nominal {
            stage_costs[horizon - 1] = last;
        }
        Self {
            stage_costs,
            horizon,
            ..self.clone()
        }
    }
}

/// State, continuous and integer input sequences. Integer entries are
/// stored as reals so relaxed solutions fit the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    /// `(x(k), u(k), v(k))` stacked, for `k < N`.
    pub fn triplet(&self, k: usize) -> DVector<f64> {
        let xs = self.x[k].len();
        let us = self.u[k].len();
        let mut z = DVector::zeros(xs + us + self.v[k].len());
        z.rows_mut(0, xs).copy_from(&self.x[k]);
        z.rows_mut(xs, us).copy_from(&self.u[k]);
        z.rows_mut(xs + us, self.v[k].len()).copy_from(&self.v[k]);
        z
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    DimensionMismatch,
    NonFinite,
    EmptyIntegerSet,
    UnsortedIntegerSet,
    InvertedBounds,
    InitialStateOutside,
    Horizon,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Self::DimensionMismatch => "dimension mismatch",
            Self::NonFinite => "non-finite entry",
            Self::EmptyIntegerSet => "empty integer set",
            Self::UnsortedIntegerSet => "unsorted integer set",
            Self::InvertedBounds => "inverted bounds",
            Self::InitialStateOutside => "initial state outside bounds",
            Self::Horizon => "horizon",
        };
        f.write_str(tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

struct Checker(Vec<Violation>);

impl Checker {
    fn push(&mut self, kind: ViolationKind, detail: impl Into<String>) {
        self.0.push(Violation {
            kind,
            detail: detail.into(),
        });
    }

    fn shape(&mut self, name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> bool {
        if m.shape() != (rows, cols) {
            self.push(
                ViolationKind::DimensionMismatch,
                format!("{name} is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols()),
            );
            return false;
        }
        if m.iter().any(|x| !x.is_finite()) {
            self.push(ViolationKind::NonFinite, name.to_string());
        }
        true
    }

    fn len(&mut self, name: &str, v: &DVector<f64>, n: usize, allow_inf: bool) -> bool {
        if v.len() != n {
            self.push(
                ViolationKind::DimensionMismatch,
                format!("{name} has {} entries, expected {n}", v.len()),
            );
            return false;
        }
        if v.iter().any(|x| x.is_nan() || (!allow_inf && x.is_infinite())) {
            self.push(ViolationKind::NonFinite, name.to_string());
        }
        true
    }

    fn bounds(&mut self, name: &str, b: &BoxSet, n: usize) -> bool {
        let ok =
            self.len(&format!("{name} lower"), &b.lo, n, true) & self.len(&format!("{name} upper"), &b.hi, n, true);
        if ok {
            for (i, (lo, hi)) in b.lo.iter().zip(b.hi.iter()).enumerate() {
                if lo > hi {
                    self.push(ViolationKind::InvertedBounds, format!("{name}[{i}]: {lo} > {hi}"));
                }
            }
        }
        ok
    }
}

/// Collects every dimension and bound inconsistency; empty means valid.
pub fn validate(inst: &MiocpInstance) -> Vec<Violation> {
    let mut c = Checker(Vec::new());
    let nx = inst.dynamics.a.nrows();
    let nu = inst.dynamics.b1.ncols();
    let nv = inst.dynamics.b2.ncols();
    let nw = nu + nv;

    let dyn_ok = c.shape("A", &inst.dynamics.a, nx, nx)
        & c.shape("B1", &inst.dynamics.b1, nx, nu)
        & c.shape("B2", &inst.dynamics.b2, nx, nv)
        & c.len("dynamics offset", &inst.dynamics.offset, nx, false);

    if inst.horizon == 0 {
        c.push(ViolationKind::Horizon, "N must be at least 1");
    }
    if inst.stage_costs.len() != inst.horizon {
        c.push(
            ViolationKind::DimensionMismatch,
            format!("{} stage costs for horizon {}", inst.stage_costs.len(), inst.horizon),
        );
    }
    for (k, cost) in inst.stage_costs.iter().enumerate() {
        c.shape(&format!("stage {k} Q"), &cost.q_mat, nx, nx);
        c.shape(&format!("stage {k} R"), &cost.r_mat, nw, nw);
        c.len(&format!("stage {k} q"), &cost.q_vec, nx, false);
        c.len(&format!("stage {k} r"), &cost.r_vec, nw, false);
        if !cost.constant.is_finite() {
            c.push(ViolationKind::NonFinite, format!("stage {k} constant"));
        }
    }
    c.shape("terminal Q", &inst.terminal_cost.q_mat, nx, nx);
    c.len("terminal q", &inst.terminal_cost.q_vec, nx, false);

    let cons = &inst.constraints;
    let xb_ok = c.bounds("x bounds", &cons.x_bounds, nx);
    c.bounds("u bounds", &cons.u_bounds, nu);
    if cons.v_sets.len() != nv {
        c.push(
            ViolationKind::DimensionMismatch,
            format!("{} integer channels, B2 has {nv} columns", cons.v_sets.len()),
        );
    }
    for (j, set) in cons.v_sets.iter().enumerate() {
        if set.is_empty() {
            c.push(ViolationKind::EmptyIntegerSet, format!("channel {j}"));
        } else if set.windows(2).any(|w| w[0] >= w[1]) {
            c.push(
                ViolationKind::UnsortedIntegerSet,
                format!("channel {j} is not strictly increasing"),
            );
        }
    }
    for (i, row) in cons.mixed.iter().enumerate() {
        c.len(&format!("mixed row {i} gx"), &row.gx, nx, false);
        c.len(&format!("mixed row {i} gu"), &row.gu, nu, false);
        c.len(&format!("mixed row {i} gv"), &row.gv, nv, false);
        if row.lo.is_nan() || row.hi.is_nan() {
            c.push(ViolationKind::NonFinite, format!("mixed row {i} bounds"));
        } else if row.lo > row.hi {
            c.push(
                ViolationKind::InvertedBounds,
                format!("mixed row {i}: {} > {}", row.lo, row.hi),
            );
        }
    }

    let x0_ok = c.len("x0", &inst.x0, nx, false);
    if x0_ok && xb_ok && !cons.x_bounds.contains(&inst.x0, 0.0) {
        c.push(ViolationKind::InitialStateOutside, "x0 violates x bounds");
    }
    if let Some(set) = &inst.x0_set {
        if c.bounds("x0 set", set, nx) && x0_ok && !set.contains(&inst.x0, 0.0) {
            c.push(ViolationKind::InitialStateOutside, "x0 outside x0 set");
        }
    }
    let _ = dyn_ok;
    c.0
}

fn check_seq(name: &str, seq: &[DVector<f64>], n: usize, dim: usize) -> Result<(), ModelError> {
    if seq.len() != n {
        return Err(ModelError::DimensionMismatch(format!(
            "{name} has {} steps, expected {n}",
            seq.len()
        )));
    }
    if let Some((k, bad)) = seq.iter().enumerate().find(|(_, s)| s.len() != dim) {
        return Err(ModelError::DimensionMismatch(format!(
            "{name}[{k}] has {} entries, expected {dim}",
            bad.len()
        )));
    }
    Ok(())
}

/// Rolls the dynamics forward from `x0`. Constraints are not checked.
pub fn simulate(
    inst: &MiocpInstance,
    u_seq: &[DVector<f64>],
    v_seq: &[DVector<f64>],
) -> Result<Trajectory, ModelError> {
    let n = inst.horizon;
    check_seq("u sequence", u_seq, n, inst.nu())?;
    check_seq("v sequence", v_seq, n, inst.nv())?;
    if inst.x0.len() != inst.nx() {
        return Err(ModelError::DimensionMismatch(format!(
            "x0 has {} entries, expected {}",
            inst.x0.len(),
            inst.nx()
        )));
    }
    let mut x = Vec::with_capacity(n + 1);
    x.push(inst.x0.clone());
    for k in 0..n {
        let next = inst.dynamics.step(&x[k], &u_seq[k], &v_seq[k]);
        x.push(next);
    }
    Ok(Trajectory {
        x,
        u: u_seq.to_vec(),
        v: v_seq.to_vec(),
    })
}

/// `Σ ℓ_k(x(k), u(k), v(k)) + V_f(x(N))`.
pub fn total_cost(inst: &MiocpInstance, traj: &Trajectory) -> f64 {
    let stages: f64 = (0..inst.horizon)
        .map(|k| inst.stage_costs[k].eval(&traj.x[k], &traj.u[k], &traj.v[k]))
        .sum();
    stages + inst.terminal_cost.eval(&traj.x[inst.horizon])
}
