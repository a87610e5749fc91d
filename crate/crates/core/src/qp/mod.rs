//! Convex quadratic programs and a primal-dual interior-point solver.
//!
//! Problems have the form
//!
//! ```text
//! min ½ zᵀHz + gᵀz + c   s.t.  Ez = e,  Cz ≤ d
//! ```
//!
//! The solver only touches the problem through [`KktSystem`], so the same
//! iteration runs on the stage-structured backend ([`StageQp`], Riccati
//! factorization) and on the dense backend ([`DenseQp`], symmetric indefinite
//! factorization).
//!
//! Infeasibility: when the primal residual stalls, or the iteration limit is
//! reached, an elastic phase-one problem `min Σt s.t. Ez = e, Cz − t ≤ d,
//! t ≥ 0` is solved with the same method. The QP is reported infeasible when
//! its optimal `max t` exceeds [`PHASE_ONE_INFEASIBLE`]; otherwise the main
//! solve ends with [`QpStatus::IterationLimit`].

mod dense;
mod stage;

use nalgebra::DVector;
use thiserror::Error;

pub use dense::DenseQp;
pub use stage::{QpStage, StageQp};

/// Minimal constraint violation, found by phase one, that proves infeasibility.
pub const PHASE_ONE_INFEASIBLE: f64 = 1e-6;

/// Phase one only decides against [`PHASE_ONE_INFEASIBLE`]; its dual
/// residual can stall near `1e-9` once the barrier weights blow up.
const PHASE_ONE_TOL: f64 = 1e-7;

/// Proximal weight keeping the phase-one Hessian nonsingular.
const PHASE_ONE_PROX: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    /// Reduced Hessian has an eigenvalue below the convexity tolerance.
    #[error("nonconvex QP rejected: reduced Hessian eigenvalue {0:.3e}")]
    NonconvexRejected(f64),
    #[error("KKT factorization failed: {0}")]
    Factorization(String),
}

#[derive(Debug, Clone)]
pub struct QpOutput {
    pub status: QpStatus,
    pub z: DVector<f64>,
    /// Equality multipliers.
    pub y: DVector<f64>,
    /// Inequality multipliers, `≥ 0`.
    pub lambda: DVector<f64>,
    pub objective: f64,
    /// Max of dual residual, equality residual, inequality violation and
    /// complementarity `sᵀλ`, all in the ∞-norm.
    pub kkt_residual: f64,
    /// Interior-point iterations, phase one included.
    pub iterations: usize,
}

/// Access to a QP and to solves with its regularized KKT matrix
/// `[H + CᵀΣC, Eᵀ; E, 0]` for diagonal `Σ ≥ 0`.
pub trait KktSystem: Sized {
    type Factor;

    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn hess_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn grad(&self) -> &DVector<f64>;
    fn constant(&self) -> f64;
    fn eq_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn eq_tmul(&self, y: &DVector<f64>) -> DVector<f64>;
    fn eq_rhs(&self) -> &DVector<f64>;
    fn in_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn in_tmul(&self, lambda: &DVector<f64>) -> DVector<f64>;
    fn in_rhs(&self) -> &DVector<f64>;
    /// A point satisfying `Ez = e`, or as close as cheaply available.
    fn initial_point(&self) -> DVector<f64>;
    /// Rejects QPs whose Hessian is not PSD on the nullspace of `E`.
    fn check_convex(&self) -> Result<(), QpError>;
    fn factor(&self, sigma: &DVector<f64>) -> Result<Self::Factor, QpError>;
    /// Solves `(H + CᵀΣC) dz + Eᵀdy = rz`, `E dz = re`.
    fn solve(&self, factor: &Self::Factor, rz: &DVector<f64>, re: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
    /// The elastic phase-one problem with a small proximal term, and the
    /// variable indices of its elastic slacks.
    fn phase_one(&self, prox: f64) -> (Self, Vec<usize>);

    fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&self.hess_mul(z)) + self.grad().dot(z) + self.constant()
    }
}

struct Residuals {
    dual: DVector<f64>,
    eq: DVector<f64>,
    ineq: DVector<f64>,
    /// `1 + max(‖g‖, ‖Hz‖, ‖Eᵀy‖, ‖Cᵀλ‖)`.
    dual_scale: f64,
    /// `1 + ‖Ez‖`.
    primal_scale: f64,
}

impl Residuals {
    fn eval<S: KktSystem>(
        sys: &S,
        z: &DVector<f64>,
        y: &DVector<f64>,
        s: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Self {
        let (hz, ey, cl) = (sys.hess_mul(z), sys.eq_tmul(y), sys.in_tmul(lambda));
        let dual_scale = 1.0
            + inf_norm(sys.grad())
                .max(inf_norm(&hz))
                .max(inf_norm(&ey))
                .max(inf_norm(&cl));
        let dual = hz + sys.grad() + ey + cl;
        let ez = sys.eq_mul(z);
        let primal_scale = 1.0 + inf_norm(&ez);
        let eq = ez - sys.eq_rhs();
        let ineq = sys.in_mul(z) + s - sys.in_rhs();
        Self {
            dual,
            eq,
            ineq,
            dual_scale,
            primal_scale,
        }
    }

    fn primal(&self) -> f64 {
        self.eq.amax().max(self.ineq.amax())
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Largest `α ≤ 1` with `v + α dv ≥ 0`.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

fn kkt_residual<S: KktSystem>(sys: &S, z: &DVector<f64>, y: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
    let dual = sys.hess_mul(z) + sys.grad() + sys.eq_tmul(y) + sys.in_tmul(lambda);
    let eq = sys.eq_mul(z) - sys.eq_rhs();
    let slack = sys.in_rhs() - sys.in_mul(z);
    let violation = slack.iter().map(|&s| (-s).max(0.0)).fold(0.0, f64::max);
    let comp = slack
        .iter()
        .zip(lambda.iter())
        .map(|(&s, &l)| (s * l).abs())
        .sum::<f64>();
    inf_norm(&dual).max(inf_norm(&eq)).max(violation).max(comp)
}

/// Solves the KKT system and applies up to `steps` refinement steps against
/// the unfactored operator.
fn refined_solve<S: KktSystem>(
    sys: &S,
    factor: &S::Factor,
    sigma: &DVector<f64>,
    rz: &DVector<f64>,
    re: &DVector<f64>,
    steps: usize,
) -> (DVector<f64>, DVector<f64>) {
    let (mut dz, mut dy) = sys.solve(factor, rz, re);
    let scale = 1.0 + inf_norm(rz).max(inf_norm(re));
    for _ in 0..steps {
        let cz = sys.in_mul(&dz);
        let op_z = sys.hess_mul(&dz) + sys.in_tmul(&cz.component_mul(sigma)) + sys.eq_tmul(&dy);
        let res_z = rz - op_z;
        let res_e = re - sys.eq_mul(&dz);
        let err = inf_norm(&res_z).max(inf_norm(&res_e));
        if !err.is_finite() || err <= 1e-13 * scale {
            break;
        }
        let (cz_corr, cy_corr) = sys.solve(factor, &res_z, &res_e);
        dz += cz_corr;
        dy += cy_corr;
    }
    (dz, dy)
}

#[derive(Clone, Copy)]
enum Start {
    LeastSquares,
    /// `initial_point`, slacks at least one, unit multipliers.
    Simple,
}

enum Outcome {
    Converged,
    Stalled,
    Limit,
}

struct IpmRun {
    z: DVector<f64>,
    y: DVector<f64>,
    lambda: DVector<f64>,
    iterations: usize,
    outcome: Outcome,
}

/// Start from `min ½zᵀHz + gᵀz + ½‖d − Cz‖²` subject to `Ez = b`, one
/// solve with `Σ = I`. Slacks are `d − Cz` and multipliers their negation,
/// both shifted to be positive. `None` if that breaks down.
fn starting_point<S: KktSystem>(sys: &S) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
    let m = sys.num_ineq();
    let d = sys.in_rhs();
    if d.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let factor = sys.factor(&DVector::from_element(m, 1.0)).ok()?;
    let (z, y) = sys.solve(&factor, &(sys.in_tmul(d) - sys.grad()), sys.eq_rhs());
    let s = d - sys.in_mul(&z);
    let lambda = -&s;
    // Shift into the orthant, then balance the two sides' complementarity.
    let shift = |v: DVector<f64>| {
        let low = v.iter().copied().fold(f64::INFINITY, f64::min);
        v.add_scalar((-1.5 * low).max(0.0))
    };
    let (s, lambda) = (shift(s), shift(lambda));
    let sl = s.dot(&lambda);
    let (s_sum, l_sum) = (s.sum(), lambda.sum());
    if m > 0 && !(sl > 0.0 && s_sum > 0.0 && l_sum > 0.0) {
        return None;
    }
    let (s, lambda) = if m > 0 {
        (s.add_scalar(0.5 * sl / l_sum), lambda.add_scalar(0.5 * sl / s_sum))
    } else {
        (s, lambda)
    };
    let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
    (finite(&z) && finite(&y) && finite(&s) && finite(&lambda)).then_some((z, y, s, lambda))
}

/// Mehrotra predictor-corrector. Returns on convergence, on a stalled primal
/// residual (when `detect_stall`), or at the iteration limit. Convergence is
/// judged on residuals relative to the terms they are made of. A limit or a
/// breakdown returns the iterate with the lowest scaled error.
fn mehrotra<S: KktSystem>(sys: &S, settings: &QpSettings, detect_stall: bool, start: Start) -> Result<IpmRun, QpError> {
    let m = sys.num_ineq();
    let computed = match start {
        Start::LeastSquares => starting_point(sys),
        Start::Simple => None,
    };
    let (mut z, mut y, mut s, mut lambda) = computed.unwrap_or_else(|| {
        let z = sys.initial_point();
        let s = (sys.in_rhs() - sys.in_mul(&z)).map(|v| v.max(1.0));
        (z, DVector::zeros(sys.num_eq()), s, DVector::from_element(m, 1.0))
    });
    let mut primal_hist: Vec<f64> = Vec::new();
    let finite_amax = |v: &DVector<f64>| {
        v.iter()
            .filter(|x| x.is_finite())
            .fold(0.0, |a: f64, &b| a.max(b.abs()))
    };
    let rhs_scale = 1.0 + finite_amax(sys.eq_rhs()).max(finite_amax(sys.in_rhs()));
    // Lowest scaled KKT error so far; returned if the iteration breaks down.
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>)> = None;

    for iter in 0..settings.max_iter {
        let res = Residuals::eval(sys, &z, &y, &s, &lambda);
        let gap = s.dot(&lambda);
        let primal = res.primal();
        let dual = inf_norm(&res.dual);
        if !primal.is_finite() || !gap.is_finite() || !dual.is_finite() {
            return match best {
                Some((_, z, y, lambda)) => Ok(IpmRun {
                    z,
                    y,
                    lambda,
                    iterations: iter,
                    outcome: Outcome::Limit,
                }),
                None => Err(QpError::Factorization("non-finite iterate".into())),
            };
        }
        // Each error relative to the magnitudes it is computed from.
        let primal_scale = rhs_scale.max(res.primal_scale);
        let gap_scale = 1.0 + sys.objective(&z).abs();
        let merit = (dual / res.dual_scale).max(primal / primal_scale).max(gap / gap_scale);
        if merit <= settings.tol {
            return Ok(IpmRun {
                z,
                y,
                lambda,
                iterations: iter,
                outcome: Outcome::Converged,
            });
        }
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, z.clone(), y.clone(), lambda.clone()));
        }
        primal_hist.push(primal);
        let mu = if m > 0 { gap / m as f64 } else { 0.0 };
        if detect_stall && primal > 1e-6 {
            let n = primal_hist.len();
            let tiny_mu = mu < 1e-10;
            let flat = n > 8 && primal > 0.5 * primal_hist[n - 6];
            if tiny_mu || flat {
                return Ok(IpmRun {
                    z,
                    y,
                    lambda,
                    iterations: iter,
                    outcome: Outcome::Stalled,
                });
            }
        }

        let sigma_diag = lambda.component_div(&s);
        let factor = sys.factor(&sigma_diag)?;
        // Eliminating ds and dλ leaves
        //   rz = −r_d − Cᵀ S⁻¹(−r_c + Λ r_i),   re = −r_e
        //   dλ = S⁻¹(−r_c + Λ r_i) + Σ C dz,     ds = −r_i − C dz
        // The predictor only feeds the step length and the second-order term,
        // so it skips refinement.
        let direction = |rc: &DVector<f64>, steps: usize| {
            let t = (res.ineq.component_mul(&lambda) - rc).component_div(&s);
            let rz = -&res.dual - sys.in_tmul(&t);
            let re = -&res.eq;
            let (dz, dy) = refined_solve(sys, &factor, &sigma_diag, &rz, &re, steps);
            let cdz = sys.in_mul(&dz);
            let dl = &t + cdz.component_mul(&sigma_diag);
            let ds = -&res.ineq - cdz;
            (dz, dy, ds, dl)
        };

        let rc_aff = s.component_mul(&lambda);
        let (_, _, ds_a, dl_a) = direction(&rc_aff, 0);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&lambda, &dl_a));
        let sigma = if m > 0 {
            let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&lambda + &dl_a * alpha_aff)) / m as f64;
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let rc = rc_aff + ds_a.component_mul(&dl_a) - DVector::from_element(m, sigma * mu);
        let (dz, dy, ds, dl) = direction(&rc, 2);
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&lambda, &dl))).min(1.0);

        z += &dz * alpha;
        y += &dy * alpha;
        s += &ds * alpha;
        lambda += &dl * alpha;
        // Keep strictly interior despite rounding.
        s.apply(|v| *v = v.max(1e-300));
        lambda.apply(|v| *v = v.max(1e-300));
    }
    let (z, y, lambda) = match best {
        Some((_, z, y, lambda)) => (z, y, lambda),
        None => (z, y, lambda),
    };
    Ok(IpmRun {
        z,
        y,
        lambda,
        iterations: settings.max_iter,
        outcome: Outcome::Limit,
    })
}

/// Minimal constraint violation of `sys` by phase one, if phase one converges.
fn min_violation<S: KktSystem>(sys: &S, settings: &QpSettings) -> Result<(Option<f64>, usize), QpError> {
    let (p1, elastic) = sys.phase_one(PHASE_ONE_PROX);
    let settings = QpSettings {
        tol: settings.tol.max(PHASE_ONE_TOL),
        ..*settings
    };
    let run = mehrotra(&p1, &settings, false, Start::Simple)?;
    let viol = elastic.iter().map(|&i| run.z[i]).fold(0.0, f64::max);
    Ok((
        matches!(run.outcome, Outcome::Converged).then_some(viol),
        run.iterations,
    ))
}

/// Solves a convex QP. See the module docs for the infeasibility test.
pub fn solve<S: KktSystem>(sys: &S, settings: &QpSettings) -> Result<QpOutput, QpError> {
    sys.check_convex()?;
    let mut run = mehrotra(sys, settings, true, Start::LeastSquares)?;
    let mut iterations = run.iterations;
    if matches!(run.outcome, Outcome::Limit) {
        // The computed start occasionally misleads on big-M rows.
        run = mehrotra(sys, settings, true, Start::Simple)?;
        iterations += run.iterations;
    }
    let status = match run.outcome {
        Outcome::Converged => QpStatus::Optimal,
        Outcome::Stalled | Outcome::Limit => {
            let (viol, it) = min_violation(sys, settings)?;
            iterations += it;
            match viol {
                Some(v) if v > PHASE_ONE_INFEASIBLE => QpStatus::Infeasible,
                _ if matches!(run.outcome, Outcome::Stalled) => {
                    // Phase one found no proof; finish the main solve.
                    let rerun = mehrotra(sys, settings, false, Start::LeastSquares)?;
                    iterations += rerun.iterations;
                    let status = if matches!(rerun.outcome, Outcome::Converged) {
                        QpStatus::Optimal
                    } else {
                        QpStatus::IterationLimit
                    };
                    return Ok(finish(sys, rerun, status, iterations));
                }
                _ => QpStatus::IterationLimit,
            }
        }
    };
    Ok(finish(sys, run, status, iterations))
}

/// Penalty on the rows kept active by [`polish`].
const POLISH_PENALTY: f64 = 1e6;
const POLISH_STEPS: usize = 10;

/// Sharpens a converged interior point. Rows whose slack does not exceed
/// their multiplier are imposed as equalities through augmented-Lagrangian
/// steps on the regularized KKT matrix; the others are dropped, which
/// removes the residual barrier pull. Ill-conditioned problems (unstable
/// dynamics, flat directions) otherwise return visibly off-centre points.
/// `None` unless the result is feasible, dual feasible, no worse in
/// objective and no worse in KKT residual.
fn polish<S: KktSystem>(sys: &S, run: &IpmRun) -> Option<IpmRun> {
    let d = sys.in_rhs();
    let slack = d - sys.in_mul(&run.z);
    let active = DVector::from_fn(d.len(), |i, _| if slack[i] <= run.lambda[i] { 1.0 } else { 0.0 });
    let sigma = &active * POLISH_PENALTY;
    let factor = sys.factor(&sigma).ok()?;
    let target = d.component_mul(&active);
    let gap_tol = 1e-13 * (1.0 + inf_norm(&target));
    let mut lambda = run.lambda.component_mul(&active);
    let (mut z, mut y) = (run.z.clone(), run.y.clone());
    for _ in 0..POLISH_STEPS {
        let rz = -sys.grad() - sys.in_tmul(&(&lambda - &sigma.component_mul(d)));
        (z, y) = refined_solve(sys, &factor, &sigma, &rz, sys.eq_rhs(), 2);
        let gap = (sys.in_mul(&z) - d).component_mul(&active);
        lambda += sigma.component_mul(&gap);
        if inf_norm(&gap) <= gap_tol {
            break;
        }
    }
    if !z.iter().chain(y.iter()).chain(lambda.iter()).all(|v| v.is_finite()) {
        return None;
    }
    let tol = 1e-9;
    let lam_ok = lambda.iter().all(|&l| l >= -tol * (1.0 + inf_norm(&run.lambda)));
    let slack_ok = (d - sys.in_mul(&z))
        .iter()
        .zip(d.iter())
        .all(|(&s, &di)| s >= -tol * (1.0 + di.abs()));
    let eq_ok = inf_norm(&(sys.eq_mul(&z) - sys.eq_rhs())) <= tol * (1.0 + inf_norm(sys.eq_rhs()));
    let (obj, obj_ipm) = (sys.objective(&z), sys.objective(&run.z));
    let obj_ok = obj <= obj_ipm + tol * (1.0 + obj_ipm.abs());
    let sharper = kkt_residual(sys, &z, &y, &lambda) <= kkt_residual(sys, &run.z, &run.y, &run.lambda).max(1e-12);
    (lam_ok && slack_ok && eq_ok && obj_ok && sharper).then_some(IpmRun {
        z,
        y,
        lambda,
        iterations: run.iterations,
        outcome: Outcome::Converged,
    })
}

fn finish<S: KktSystem>(sys: &S, run: IpmRun, status: QpStatus, iterations: usize) -> QpOutput {
    let run = match status {
        QpStatus::Optimal => polish(sys, &run).unwrap_or(run),
        _ => run,
    };
    let objective = if status == QpStatus::Infeasible {
        f64::INFINITY
    } else {
        sys.objective(&run.z)
    };
    QpOutput {
        status,
        kkt_residual: kkt_residual(sys, &run.z, &run.y, &run.lambda),
        objective,
        z: run.z,
        y: run.y,
        lambda: run.lambda,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(h: &[f64], g: &[f64], e: (&[f64], &[f64]), c: (&[f64], &[f64])) -> DenseQp {
        let n = g.len();
        let me = e.1.len();
        let mi = c.1.len();
        DenseQp::new(
            DMatrix::from_row_slice(n, n, h),
            DVector::from_column_slice(g),
            0.0,
            DMatrix::from_row_slice(me, n, e.0),
            DVector::from_column_slice(e.1),
            DMatrix::from_row_slice(mi, n, c.0),
            DVector::from_column_slice(c.1),
        )
    }

    #[test]
    fn box_constrained_projection() {
        // min (z₁−2)² + (z₂+3)² over [−1,1]², optimum (1, −1), value 1 + 4.
        let qp = dense(
            &[2., 0., 0., 2.],
            &[-4., 6.],
            (&[], &[]),
            (&[1., 0., -1., 0., 0., 1., 0., -1.], &[1., 1., 1., 1.]),
        );
        let out = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(out.status, QpStatus::Optimal);
        assert!((out.z[0] - 1.0).abs() < 1e-7 && (out.z[1] + 1.0).abs() < 1e-7);
        assert!((out.objective - (5.0 - 13.0)).abs() < 1e-7);
        assert!(out.kkt_residual <= 1e-7);
    }

    #[test]
    fn equality_only_is_one_newton_step() {
        // min z₁² + z₂² s.t. z₁ + z₂ = 2 → (1, 1).
        let qp = dense(&[2., 0., 0., 2.], &[0., 0.], (&[1., 1.], &[2.]), (&[], &[]));
        let out = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(out.status, QpStatus::Optimal);
        assert!((out.z[0] - 1.0).abs() < 1e-10 && (out.z[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // z ≤ −1 and z ≥ 1.
        let qp = dense(&[2.], &[0.], (&[], &[]), (&[1., -1.], &[-1., -1.]));
        let out = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(out.status, QpStatus::Infeasible);
        assert_eq!(out.objective, f64::INFINITY);
    }

    #[test]
    fn pinned_by_two_inequalities() {
        // z₁ − z₂ ≤ 0 and z₂ − z₁ ≤ 0 pin z₁ = z₂; min (z₁−1)² + z₂².
        let qp = dense(
            &[2., 0., 0., 2.],
            &[-2., 0.],
            (&[], &[]),
            (&[1., -1., -1., 1.], &[0., 0.]),
        );
        let out = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(out.status, QpStatus::Optimal);
        assert!((out.z[0] - 0.5).abs() < 1e-6 && (out.z[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn implied_equality_with_large_barrier_weights() {
        // Variables (x, u, w): x = u + 0.8w, w = x pinned by two rows.
        // Reduces to min 104x² − 8x, optimum x = 1/26, u = x/5.
        let qp = dense(
            &[200., 0., 0., 0., 200., 0., 0., 0., 0.],
            &[-10., 10., 0.],
            (&[-1., 1., 0.8], &[0.]),
            (
                &[
                    1., 0., -1., -1., 0., 1., 1., 0., 0., -1., 0., 0., 0., 1., 0., 0., -1., 0.,
                ],
                &[0., 0., 1., 1., 0.5, 0.5],
            ),
        );
        let out = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(out.status, QpStatus::Optimal);
        assert!((out.z[0] - 1.0 / 26.0).abs() < 1e-7);
        assert!((out.z[1] - 1.0 / 130.0).abs() < 1e-7);
        assert!((out.objective + 2.0 / 13.0).abs() < 1e-7);
    }

    #[test]
    fn linear_program_with_optimal_vertex() {
        // min −z₁ − z₂ over the simplex-like set z ≥ 0, z₁ + 2z₂ ≤ 4, 3z₁ + z₂ ≤ 6.
        let qp = dense(
            &[0., 0., 0., 0.],
            &[-1., -1.],
            (&[], &[]),
            (&[-1., 0., 0., -1., 1., 2., 3., 1.], &[0., 0., 4., 6.]),
        );
        let out = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(out.status, QpStatus::Optimal);
        assert!((out.z[0] - 1.6).abs() < 1e-6 && (out.z[1] - 1.2).abs() < 1e-6);
    }

    #[test]
    fn nonconvex_is_rejected() {
        let qp = dense(&[-2.], &[0.], (&[], &[]), (&[1., -1.], &[1., 1.]));
        assert!(matches!(
            solve(&qp, &QpSettings::default()),
            Err(QpError::NonconvexRejected(_))
        ));
    }

    #[test]
    fn concave_direction_outside_equality_nullspace_is_accepted() {
        // H = diag(1, −1) but z₂ = 0 is enforced, so the reduced Hessian is [1].
        let qp = dense(&[2., 0., 0., -2.], &[-2., 0.], (&[0., 1.], &[0.]), (&[], &[]));
        let out = solve(&qp, &QpSettings::default()).unwrap();
        assert!((out.z[0] - 1.0).abs() < 1e-9);
    }
}
