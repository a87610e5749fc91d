//! Optimal steady states and measured turnpike behaviour.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bnb::{solve_bnb, BnbConfig, BnbStatus, GuessSet};
use crate::model::{MiocpInstance, Trajectory};
use crate::qp::{self, DenseQp, QpError, QpSettings, QpStatus};

/// Largest `|V|` enumerated by [`solve_steady_state`].
pub const STEADY_STATE_LIMIT: u64 = 1_000_000;

/// Objective difference under which two steady states count as tied.
const TIE_TOL: f64 = 1e-9;

/// Distance to an integer under which a trajectory entry counts as integral.
const INTEGRAL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TurnpikeError {
    #[error("no integer input admits a feasible steady state")]
    Infeasible,
    #[error("|V| = {0} exceeds the enumeration limit")]
    TooManyCombinations(String),
    #[error("eps must lie in (0, 1), got {0}")]
    EpsOutOfRange(f64),
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("v({stage}) = {value} is not integral")]
    NotIntegral { stage: usize, value: f64 },
    #[error("trajectory and steady state dimensions differ")]
    DimensionMismatch,
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub x_bar: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub v_bar: Vec<i64>,
    pub cost: f64,
}

impl SteadyState {
    /// `(x̄, ū, v̄)` stacked.
    pub fn triplet(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.x_bar.len() + self.u_bar.len() + self.v_bar.len(),
            self.x_bar
                .iter()
                .chain(&self.u_bar)
                .copied()
                .chain(self.v_bar.iter().map(|&v| v as f64)),
        )
    }
}

/// Steady-state QP in `(x̄, ū)` for a fixed `v̄` under the nominal cost.
fn steady_state_qp(inst: &MiocpInstance, v: &[i64]) -> DenseQp {
    let (nx, nu) = (inst.nx(), inst.nu());
    let n = nx + nu;
    let cost = inst.nominal_cost();
    let dyns = &inst.dynamics;
    let cons = &inst.constraints;
    let v = DVector::from_iterator(v.len(), v.iter().map(|&x| x as f64));
    let r_uu = cost.r_mat.view((0, 0), (nu, nu));
    let r_uv = cost.r_mat.view((0, nu), (nu, v.len()));
    let r_vv = cost.r_mat.view((nu, nu), (v.len(), v.len()));

    let mut h = DMatrix::zeros(n, n);
    h.view_mut((0, 0), (nx, nx)).copy_from(&(&cost.q_mat * 2.0));
    h.view_mut((nx, nx), (nu, nu)).copy_from(&(r_uu * 2.0));
    let mut g = DVector::zeros(n);
    g.rows_mut(0, nx).copy_from(&cost.q_vec);
    g.rows_mut(nx, nu)
        .copy_from(&(cost.r_vec.rows(0, nu) + r_uv * &v * 2.0));
    let c0 = v.dot(&(r_vv * &v)) + cost.r_vec.rows(nu, v.len()).dot(&v) + cost.constant;

    // (A − I)x̄ + B1ū = −B2v̄ − c
    let mut e_mat = DMatrix::zeros(nx, n);
    e_mat
        .view_mut((0, 0), (nx, nx))
        .copy_from(&(&dyns.a - DMatrix::identity(nx, nx)));
    e_mat.view_mut((0, nx), (nx, nu)).copy_from(&dyns.b1);
    let e_vec = -(&dyns.b2 * &v) - &dyns.offset;

    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut push = |coef: DVector<f64>, lo: f64, hi: f64| {
        if hi.is_finite() {
            rows.push((coef.clone(), hi));
        }
        if lo.is_finite() {
            rows.push((-coef, -lo));
        }
    };
    for (i, (&lo, &hi)) in cons.x_bounds.lo.iter().zip(cons.x_bounds.hi.iter()).enumerate() {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        push(e, lo, hi);
    }
    for (i, (&lo, &hi)) in cons.u_bounds.lo.iter().zip(cons.u_bounds.hi.iter()).enumerate() {
        let mut e = DVector::zeros(n);
        e[nx + i] = 1.0;
        push(e, lo, hi);
    }
    for row in &cons.mixed {
        let mut coef = DVector::zeros(n);
        coef.rows_mut(0, nx).copy_from(&row.gx);
        coef.rows_mut(nx, nu).copy_from(&row.gu);
        let shift = row.gv.dot(&v);
        push(coef, row.lo - shift, row.hi - shift);
    }
    let c_mat = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
    let d_vec = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    DenseQp::new(h, g, c0, e_mat, e_vec, c_mat, d_vec)
}

/// Global optimum of the stationary problem by enumerating `v̄ ∈ V`.
/// Ties within `1e-9` keep the lexicographically smallest `v̄`.
pub fn solve_steady_state(inst: &MiocpInstance) -> Result<SteadyState, TurnpikeError> {
    let size = inst.constraints.product_size();
    if size.is_none_or(|s| s > STEADY_STATE_LIMIT) {
        return Err(TurnpikeError::TooManyCombinations(
            size.map_or_else(|| "overflowing".into(), |s| s.to_string()),
        ));
    }
    let nx = inst.nx();
    let settings = QpSettings::default();
    let mut best: Option<SteadyState> = None;
    for v in inst.constraints.integer_points() {
        let sys = steady_state_qp(inst, &v);
        let out = qp::solve(&sys, &settings)?;
        if out.status != QpStatus::Optimal {
            continue;
        }
        let (z, cost) = (out.z, out.objective);
        if best.as_ref().is_none_or(|b| cost < b.cost - TIE_TOL) {
            best = Some(SteadyState {
                x_bar: z.rows(0, nx).iter().copied().collect(),
                u_bar: z.rows(nx, inst.nu()).iter().copied().collect(),
                v_bar: v,
                cost,
            });
        }
    }
    best.ok_or(TurnpikeError::Infeasible)
}

/// `{k < N : ‖z(k) − z̄‖∞ ≤ ε}` in increasing order.
pub fn compute_q_eps(traj: &Trajectory, z_bar: &SteadyState, eps: f64) -> Result<Vec<usize>, TurnpikeError> {
    if !(eps > 0.0) {
        return Err(TurnpikeError::NonPositiveEps(eps));
    }
    let zb = z_bar.triplet();
    let mut out = Vec::new();
    for k in 0..traj.horizon() {
        let z = traj.triplet(k);
        if z.len() != zb.len() {
            return Err(TurnpikeError::DimensionMismatch);
        }
        if (z - &zb).amax() <= eps {
            out.push(k);
        }
    }
    Ok(out)
}

/// First and last index of the longest run of consecutive indices in a
/// sorted set; the earliest run wins ties.
pub fn longest_run(q: &[usize]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    for i in 0..q.len() {
        if i + 1 == q.len() || q[i + 1] != q[i] + 1 {
            let run = (q[start], q[i]);
            if best.is_none_or(|(a, b)| run.1 - run.0 > b - a) {
                best = Some(run);
            }
            start = i + 1;
        }
    }
    best
}

/// Whether `v(k) = v̄` on every `k ∈ Q_ε`.
pub fn check_integer_turnpike(traj: &Trajectory, z_bar: &SteadyState, eps: f64) -> Result<bool, TurnpikeError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(TurnpikeError::EpsOutOfRange(eps));
    }
    for (k, v) in traj.v.iter().enumerate() {
        if let Some(&value) = v.iter().find(|x| (*x - x.round()).abs() > INTEGRAL_TOL) {
            return Err(TurnpikeError::NotIntegral { stage: k, value });
        }
    }
    Ok(compute_q_eps(traj, z_bar, eps)?.into_iter().all(|k| {
        traj.v[k]
            .iter()
            .zip(&z_bar.v_bar)
            .all(|(x, &vb)| x.round() as i64 == vb)
    }))
}

/// Turnpike measurements of one solved `(x0, N)` pair at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnpikeCell {
    pub x0_id: usize,
    pub horizon: usize,
    pub eps: f64,
    pub q_eps: Vec<usize>,
    /// `N − #Q_ε`.
    pub out_count: usize,
    pub entry_end: Option<usize>,
    pub leave_start: Option<usize>,
}

/// One `(x0, N)` solve. `traj` is `None` when the solve failed.
#[derive(Debug, Clone)]
pub struct TurnpikeRun {
    pub x0_id: usize,
    pub horizon: usize,
    pub objective: f64,
    pub traj: Option<Trajectory>,
    /// Failure description, if any.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TurnpikeReport {
    pub z_bar: SteadyState,
    pub cells: Vec<TurnpikeCell>,
    pub runs: Vec<TurnpikeRun>,
    /// `max out_count · ε²` over all cells; zero without cells.
    pub c_fit: f64,
}

/// Solves every `(x0, N)` pair with [`solve_bnb`] (no guesses) and measures
/// `Q_ε` on the grid. Solver failures are recorded per run.
pub fn turnpike_profile(
    inst: &MiocpInstance,
    x0_list: &[DVector<f64>],
    horizons: &[usize],
    eps_grid: &[f64],
    cfg: &BnbConfig,
) -> Result<TurnpikeReport, TurnpikeError> {
    if let Some(&e) = eps_grid.iter().find(|e| !(**e > 0.0)) {
        return Err(TurnpikeError::NonPositiveEps(e));
    }
    let z_bar = solve_steady_state(inst)?;
    let jobs: Vec<(usize, usize)> = (0..x0_list.len())
        .flat_map(|i| horizons.iter().map(move |&n| (i, n)))
        .collect();
    let runs: Vec<TurnpikeRun> = jobs
        .par_iter()
        .map(|&(x0_id, horizon)| {
            let cell = inst.with_horizon(horizon).with_x0(x0_list[x0_id].clone());
            let (objective, traj, error) = match solve_bnb(&cell, &GuessSet::empty(), cfg) {
                Ok(r) if r.status == BnbStatus::Infeasible => (r.objective, None, Some("infeasible".into())),
                Ok(r) => {
                    let err = (r.status != BnbStatus::Optimal).then(|| format!("{:?}", r.status));
                    (r.objective, r.traj, err)
                }
                Err(e) => (f64::NAN, None, Some(e.to_string())),
            };
            TurnpikeRun {
                x0_id,
                horizon,
                objective,
                traj,
                error,
            }
        })
        .collect();

    let mut cells = Vec::new();
    for run in &runs {
        let Some(traj) = &run.traj else { continue };
        for &eps in eps_grid {
            let q_eps = compute_q_eps(traj, &z_bar, eps)?;
            let run_bounds = longest_run(&q_eps);
            cells.push(TurnpikeCell {
                x0_id: run.x0_id,
                horizon: run.horizon,
                eps,
                out_count: run.horizon - q_eps.len(),
                entry_end: run_bounds.map(|r| r.0),
                leave_start: run_bounds.map(|r| r.1),
                q_eps,
            });
        }
    }
    let c_fit = cells
        .iter()
        .map(|c| c.out_count as f64 * c.eps * c.eps)
        .fold(0.0, f64::max);
    Ok(TurnpikeReport {
        z_bar,
        cells,
        runs,
        c_fit,
    })
}

#[derive(Serialize)]
struct ReportHeader<'a> {
    z_bar: &'a SteadyState,
    c_fit: f64,
    failures: Vec<Failure<'a>>,
}

#[derive(Serialize)]
struct Failure<'a> {
    x0_id: usize,
    horizon: usize,
    error: &'a str,
}

/// CSV with columns `x0_id,N,eps,out_count,entry_end,leave_start`, preceded
/// by one `# {json}` line carrying `z̄`, `C_fit` and failed runs. Empty
/// fields mean an empty `Q_ε`.
pub fn write_report_csv<W: Write>(report: &TurnpikeReport, mut out: W) -> std::io::Result<()> {
    let header = ReportHeader {
        z_bar: &report.z_bar,
        c_fit: report.c_fit,
        failures: report
            .runs
            .iter()
            .filter_map(|r| {
                r.error.as_deref().map(|error| Failure {
                    x0_id: r.x0_id,
                    horizon: r.horizon,
                    error,
                })
            })
            .collect(),
    };
    writeln!(out, "# {}", serde_json::to_string(&header)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x0_id", "N", "eps", "out_count", "entry_end", "leave_start"])?;
    let opt = |x: Option<usize>| x.map_or_else(String::new, |v| v.to_string());
    for c in &report.cells {
        w.write_record([
            c.x0_id.to_string(),
            c.horizon.to_string(),
            c.eps.to_string(),
            c.out_count.to_string(),
            opt(c.entry_end),
            opt(c.leave_start),
        ])?;
    }
    w.flush()
}

/// Trajectory as CSV rows `k, x…, u…, v…`. Stage `N` has only `x`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> std::io::Result<()> {
    let (nx, nu, nv) = (
        traj.x[0].len(),
        traj.u.first().map_or(0, |u| u.len()),
        traj.v.first().map_or(0, |v| v.len()),
    );
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain((0..nx).map(|i| format!("x{i}")))
        .chain((0..nu).map(|i| format!("u{i}")))
        .chain((0..nv).map(|i| format!("v{i}")))
        .collect();
    w.write_record(&header)?;
    for k in 0..traj.x.len() {
        let mut rec = vec![k.to_string()];
        rec.extend(traj.x[k].iter().map(f64::to_string));
        if k < traj.horizon() {
            rec.extend(traj.u[k].iter().map(f64::to_string));
            rec.extend(traj.v[k].iter().map(f64::to_string));
        } else {
            rec.extend(std::iter::repeat_n(String::new(), nu + nv));
        }
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{example1, example2, illustrative};
    use crate::model::BoxSet;
    use proptest::prelude::*;

    fn constant(z: &SteadyState, n: usize) -> Trajectory {
        let col = |v: &[f64]| DVector::from_column_slice(v);
        let vf: Vec<f64> = z.v_bar.iter().map(|&v| v as f64).collect();
        Trajectory {
            x: vec![col(&z.x_bar); n + 1],
            u: vec![col(&z.u_bar); n],
            v: vec![col(&vf); n],
        }
    }

    #[test]
    fn illustrative_steady_state() {
        let z = solve_steady_state(&illustrative(5, 0.0)).unwrap();
        assert_eq!(z.v_bar, vec![0]);
        assert!((z.x_bar[0] - 1.0).abs() < 1e-12);
        assert!(z.u_bar[0].abs() < 1e-12);
        assert!(z.cost.abs() < 1e-12);
    }

    #[test]
    fn example1_steady_state_hand_value() {
        // v̄ = 1 gives x̄ = ū1 + 0.8x̄ with x2 = x̄; minimizing 100x̄² − 10x̄
        // + 100ū² + 10ū with ū = 0.2x̄ yields x̄ = 1/26, cost −2/13.
        let z = solve_steady_state(&example1(5, 0.0)).unwrap();
        assert_eq!(z.v_bar, vec![1]);
        assert!((z.x_bar[0] - 1.0 / 26.0).abs() < 1e-9);
        assert!((z.u_bar[0] - 1.0 / 130.0).abs() < 1e-9);
        assert!((z.u_bar[1] - 1.0 / 26.0).abs() < 1e-9);
        assert!((z.cost + 2.0 / 13.0).abs() < 1e-9);
    }

    #[test]
    fn example2_steady_state_hand_value() {
        // v̄ = 0: x̄ = ū·1, cost 100(n+1)ū² + 10ū, minimized at ū = −1/(20(n+1)).
        for n in [3usize, 30] {
            let z = solve_steady_state(&example2(n, 5, &DVector::zeros(n))).unwrap();
            let u = -1.0 / (20.0 * (n as f64 + 1.0));
            assert_eq!(z.v_bar, vec![0]);
            assert!((z.u_bar[0] - u).abs() < 1e-10);
            assert!(z.x_bar.iter().all(|x| (x - u).abs() < 1e-10));
            assert!((z.cost + 1.0 / (4.0 * (n as f64 + 1.0))).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_constrained_example2_rests_at_origin() {
        let mut inst = example2(3, 5, &DVector::zeros(3));
        inst.constraints.u_bounds = BoxSet {
            lo: DVector::zeros(1),
            hi: DVector::from_element(1, f64::INFINITY),
        };
        let z = solve_steady_state(&inst).unwrap();
        assert_eq!(z.v_bar, vec![0]);
        assert!(z.triplet().amax() < 1e-10);
    }

    #[test]
    fn pinned_state() {
        let mut inst = illustrative(5, 0.0);
        inst.constraints.x_bounds = BoxSet {
            lo: DVector::from_element(1, 1.5),
            hi: DVector::from_element(1, 1.5),
        };
        // x̄ = 1.5 needs u + v = −0.5: v = 0, u = −½ costs ¼; v = −1, u = ½
        // costs ¾; v = 1 costs 2¼ + ½.
        let z = solve_steady_state(&inst).unwrap();
        assert!((z.x_bar[0] - 1.5).abs() < 1e-12);
        assert_eq!(z.v_bar, vec![0]);
        assert!((z.cost - 0.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_steady_state() {
        let mut inst = illustrative(5, 0.0);
        inst.constraints.u_bounds = BoxSet {
            lo: DVector::from_element(1, 2.5),
            hi: DVector::from_element(1, 3.0),
        };
        inst.constraints.x_bounds = BoxSet {
            lo: DVector::from_element(1, 0.0),
            hi: DVector::from_element(1, 0.0),
        };
        assert!(matches!(solve_steady_state(&inst), Err(TurnpikeError::Infeasible)));
    }

    #[test]
    fn grid_sampling_never_beats_enumeration() {
        // Scalar instance: x̄ = 2x̄ + ū + v̄ − 1 fixes ū = 1 − x̄ − v̄.
        let inst = illustrative(5, 0.0);
        let z = solve_steady_state(&inst).unwrap();
        let cost = inst.nominal_cost();
        let mut best = f64::INFINITY;
        for v in [-1i64, 0, 1] {
            for i in 0..=4000 {
                let x = -2.0 + 1e-3 * i as f64;
                let u = 1.0 - x - v as f64;
                if u.abs() > 3.0 {
                    continue;
                }
                let c = cost.eval(
                    &DVector::from_element(1, x),
                    &DVector::from_element(1, u),
                    &DVector::from_element(1, v as f64),
                );
                best = best.min(c);
            }
        }
        assert!(z.cost <= best + 1e-12);
    }

    #[test]
    fn q_eps_examples() {
        let z = solve_steady_state(&illustrative(5, 0.0)).unwrap();
        let mut traj = constant(&z, 6);
        assert_eq!(compute_q_eps(&traj, &z, 0.1).unwrap(), (0..6).collect::<Vec<_>>());
        traj.x[0][0] = 2.0;
        assert_eq!(compute_q_eps(&traj, &z, 0.1).unwrap(), (1..6).collect::<Vec<_>>());
        assert!(check_integer_turnpike(&traj, &z, 0.5).unwrap());
        traj.v[3][0] = 1.0;
        assert!(check_integer_turnpike(&traj, &z, 0.5).unwrap());
        assert!(matches!(
            compute_q_eps(&traj, &z, 0.0),
            Err(TurnpikeError::NonPositiveEps(_))
        ));
    }

    #[test]
    fn integer_check_rejects_bad_inputs() {
        let z = solve_steady_state(&illustrative(5, 0.0)).unwrap();
        let mut traj = constant(&z, 3);
        assert!(check_integer_turnpike(&traj, &z, 1.0).is_err());
        assert!(check_integer_turnpike(&traj, &z, 0.0).is_err());
        traj.v[1][0] = 0.3;
        assert!(matches!(
            check_integer_turnpike(&traj, &z, 0.5),
            Err(TurnpikeError::NotIntegral { stage: 1, .. })
        ));
    }

    #[test]
    fn runs() {
        assert_eq!(longest_run(&[]), None);
        assert_eq!(longest_run(&[4]), Some((4, 4)));
        assert_eq!(longest_run(&[0, 1, 3, 4, 5, 7]), Some((3, 5)));
        assert_eq!(longest_run(&[0, 1, 3, 4]), Some((0, 1)));
    }

    #[test]
    fn profile_from_the_turnpike() {
        let inst = illustrative(5, 1.0);
        let cfg = BnbConfig::default();
        let x0 = vec![DVector::from_element(1, 1.0)];
        let rep = turnpike_profile(&inst, &x0, &[6], &[0.05, 0.5], &cfg).unwrap();
        assert_eq!(rep.cells.len(), 2);
        assert!(rep.cells.iter().all(|c| c.out_count == 0));
        assert_eq!(rep.c_fit, 0.0);
        let empty = turnpike_profile(&inst, &x0, &[6], &[], &cfg).unwrap();
        assert!(empty.cells.is_empty());
        assert_eq!(empty.c_fit, 0.0);
    }

    #[test]
    fn profile_is_bounded_in_horizon() {
        let inst = illustrative(5, 2.0);
        let x0 = vec![DVector::from_element(1, 2.0)];
        let rep = turnpike_profile(&inst, &x0, &[8, 12], &[0.1], &BnbConfig::default()).unwrap();
        assert_eq!(rep.cells.len(), 2);
        assert_eq!(rep.cells[0].out_count, rep.cells[1].out_count);
        assert!(rep.runs.iter().all(|r| r.error.is_none()));
    }

    #[test]
    fn csv_layout() {
        let inst = illustrative(4, 1.0);
        let rep = turnpike_profile(
            &inst,
            &[DVector::from_element(1, 1.0)],
            &[4],
            &[0.5],
            &BnbConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_report_csv(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let head: serde_json::Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
        assert_eq!(head["z_bar"]["v_bar"][0], 0);
        assert_eq!(lines.next(), Some("x0_id,N,eps,out_count,entry_end,leave_start"));
        assert_eq!(lines.next(), Some("0,4,0.5,0,0,3"));
        let mut buf = Vec::new();
        write_trajectory_csv(rep.runs[0].traj.as_ref().unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("k,x0,u0,v0"));
        assert_eq!(text.lines().count(), 6);
    }

    proptest! {
        #[test]
        fn q_eps_nests(
            xs in prop::collection::vec(-2f64..2.0, 6),
            us in prop::collection::vec(-1f64..1.0, 5),
            vs in prop::collection::vec(-1i64..=1, 5),
            e1 in 0.01f64..1.0, e2 in 0.01f64..1.0,
        ) {
            let z = SteadyState { x_bar: vec![1.0], u_bar: vec![0.0], v_bar: vec![0], cost: 0.0 };
            let traj = Trajectory {
                x: xs.iter().map(|&x| DVector::from_element(1, x)).collect(),
                u: us.iter().map(|&u| DVector::from_element(1, u)).collect(),
                v: vs.iter().map(|&v| DVector::from_element(1, v as f64)).collect(),
            };
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let small = compute_q_eps(&traj, &z, lo).unwrap();
            let large = compute_q_eps(&traj, &z, hi).unwrap();
            prop_assert!(small.iter().all(|k| large.contains(k)));
            // Within ε < 1 of v̄ the integer entry must equal v̄.
            prop_assert!(check_integer_turnpike(&traj, &z, lo.min(0.99)).unwrap());
        }
    }
}
