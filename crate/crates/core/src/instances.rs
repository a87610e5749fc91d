//! Built-in benchmark instances.

use nalgebra::{DMatrix, DVector};

use crate::model::{BoxSet, ConstraintSet, LinearDynamics, MiocpInstance, MixedRow, StageCost, TerminalCost};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &["illustrative", "example1", "example2"];

/// Scalar unstable system with a `{-1, 0, 1}` input:
///
/// ```text
/// min Σ u(k)² + ½ v(k)²
/// x(k+1) = 2x(k) + u(k) + v(k) - 1
/// (x, u, v) ∈ [-2, 2] × [-3, 3] × {-1, 0, 1}
/// ```
pub fn illustrative(horizon: usize, x0: f64) -> MiocpInstance {
    let dynamics = LinearDynamics::new(
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )
    .with_offset(DVector::from_element(1, -1.0));
    let cost = StageCost::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5])),
        DVector::zeros(1),
        DVector::zeros(2),
        0.0,
    );
    let constraints = ConstraintSet {
        x_bounds: BoxSet {
            lo: DVector::from_element(1, -2.0),
            hi: DVector::from_element(1, 2.0),
        },
        u_bounds: BoxSet {
            lo: DVector::from_element(1, -3.0),
            hi: DVector::from_element(1, 3.0),
        },
        v_sets: vec![vec![-1, 0, 1]],
        mixed: Vec::new(),
    };
    MiocpInstance {
        dynamics,
        stage_costs: vec![cost; horizon],
        terminal_cost: TerminalCost::zeros(1),
        constraints,
        horizon,
        x0: DVector::from_element(1, x0),
        x0_set: None,
    }
}

/// State bounds of the piecewise-affine example.
pub const EXAMPLE1_X_LO: f64 = -1.0;
pub const EXAMPLE1_X_HI: f64 = 1.0;
/// Input bounds of the piecewise-affine example (symmetric).
pub const EXAMPLE1_U_MAX: f64 = 0.5;

/// Piecewise-affine system `x⁺ = ±0.8x + u` in big-M mixed-integer form.
///
/// The state is `x1`. The auxiliary `x2 = |x1|` has no dynamics of its own,
/// so it is carried as the second continuous input: `u = (u, x2)` and
/// `x1⁺ = u + 0.8·x2`. The binary `v` selects the sign branch through six
/// one-sided mixed rows. Stages `0..N-1` use the weights
/// `(x1, x1², u, u²) · (-10, 100, 10, 100)`; stage `N-1` uses
/// `(-1000, 100, 10, 100)`. There is no cost on `x(N)`.
pub fn example1(horizon: usize, x0: f64) -> MiocpInstance {
    let (lo, hi) = (EXAMPLE1_X_LO, EXAMPLE1_X_HI);
    let dynamics = LinearDynamics::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.8]),
        DMatrix::zeros(1, 1),
    );
    let stage = |lin_x: f64| {
        StageCost::new(
            DMatrix::from_element(1, 1, 100.0),
            DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 0.0, 0.0])),
            DVector::from_element(1, lin_x),
            DVector::from_vec(vec![10.0, 0.0, 0.0]),
            0.0,
        )
    };
    let mut stage_costs = vec![stage(-10.0); horizon];
    stage_costs[horizon - 1] = stage(-1000.0);

    let row = |gx: f64, gx2: f64, gv: f64, lo: f64, hi: f64| MixedRow {
        gx: DVector::from_element(1, gx),
        gu: DVector::from_vec(vec![0.0, gx2]),
        gv: DVector::from_element(1, gv),
        lo,
        hi,
    };
    let inf = f64::INFINITY;
    let mixed = vec![
        // 2v·lo ≤ x2 + x1 ≤ 2v·hi
        row(1.0, 1.0, -2.0 * lo, 0.0, inf),
        row(1.0, 1.0, -2.0 * hi, -inf, 0.0),
        // 2(v-1)·hi ≤ x2 - x1 ≤ 2(v-1)·lo
        row(-1.0, 1.0, -2.0 * hi, -2.0 * hi, inf),
        row(-1.0, 1.0, -2.0 * lo, -inf, -2.0 * lo),
        // (1-v)·lo ≤ x1 ≤ v·hi
        row(1.0, 0.0, lo, lo, inf),
        row(1.0, 0.0, -hi, -inf, 0.0),
    ];
    let constraints = ConstraintSet {
        x_bounds: BoxSet {
            lo: DVector::from_element(1, lo),
            hi: DVector::from_element(1, hi),
        },
        u_bounds: BoxSet {
            lo: DVector::from_vec(vec![-EXAMPLE1_U_MAX, -inf]),
            hi: DVector::from_vec(vec![EXAMPLE1_U_MAX, inf]),
        },
        v_sets: vec![vec![0, 1]],
        mixed,
    };
    MiocpInstance {
        dynamics,
        stage_costs,
        terminal_cost: TerminalCost::zeros(1),
        constraints,
        horizon,
        x0: DVector::from_element(1, x0),
        x0_set: None,
    }
}

/// Upper shift matrix: ones on the first superdiagonal. Nilpotent.
pub fn shift_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

/// Chain of integrators driven at the bottom by `u` and everywhere by `v`:
///
/// ```text
/// x⁺ = E x + e_n u + 1 v,   ℓ = 10u + v + 100u² + 100 xᵀx,   v ∈ {0, 1}
/// ```
///
/// `x` and `u` are unconstrained.
pub fn example2(nx: usize, horizon: usize, x0: &DVector<f64>) -> MiocpInstance {
    assert_eq!(x0.len(), nx, "x0 must have nx entries");
    let mut b1 = DMatrix::zeros(nx, 1);
    b1[(nx - 1, 0)] = 1.0;
    let dynamics = LinearDynamics::new(shift_matrix(nx), b1, DMatrix::from_element(nx, 1, 1.0));
    let cost = StageCost::new(
        DMatrix::identity(nx, nx) * 100.0,
        DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 0.0])),
        DVector::zeros(nx),
        DVector::from_vec(vec![10.0, 1.0]),
        0.0,
    );
    MiocpInstance {
        dynamics,
        stage_costs: vec![cost; horizon],
        terminal_cost: TerminalCost::zeros(nx),
        constraints: ConstraintSet::unbounded(nx, 1, vec![vec![0, 1]]),
        horizon,
        x0: x0.clone(),
        x0_set: None,
    }
}

/// Resolves `illustrative`, `example1`, `example2` or `example2:<nx>`.
///
/// Defaults: illustrative N=30, x0=2; example1 N=20, x0=1; example2 nx=3,
/// N=20, x0=0. A scalar `x0` is broadcast over all states.
pub fn builtin(name: &str, horizon: Option<usize>, x0: Option<&[f64]>) -> Option<MiocpInstance> {
    let (base, param) = match name.split_once(':') {
        Some((b, p)) => (b, Some(p)),
        None => (name, None),
    };
    let scalar = |default: f64| x0.and_then(|v| v.first().copied()).unwrap_or(default);
    match (base, param) {
        ("illustrative", None) => Some(illustrative(horizon.unwrap_or(30), scalar(2.0))),
        ("example1", None) => Some(example1(horizon.unwrap_or(20), scalar(1.0))),
        ("example2", p) => {
            let nx = match p {
                Some(p) => p.parse().ok().filter(|&n: &usize| n >= 1)?,
                None => 3,
            };
            let x0 = match x0 {
                Some(v) if v.len() == nx => DVector::from_column_slice(v),
                Some(v) if v.len() == 1 => DVector::from_element(nx, v[0]),
                Some(_) => return None,
                None => DVector::zeros(nx),
            };
            Some(example2(nx, horizon.unwrap_or(20), &x0))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example2_shift_structure() {
        let inst = example2(3, 5, &DVector::zeros(3));
        let expect = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 0., 0., 0.]);
        assert_eq!(inst.dynamics.a, expect);
        assert_eq!(inst.dynamics.b1.column(0).as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(inst.dynamics.b2.column(0).as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn channel_sets() {
        assert_eq!(example1(10, 0.0).constraints.v_sets, vec![vec![0, 1]]);
        assert_eq!(illustrative(10, 0.0).constraints.v_sets, vec![vec![-1, 0, 1]]);
    }

    #[test]
    fn example1_last_stage_override() {
        let inst = example1(6, 1.0);
        assert_eq!(inst.stage_costs[0].q_vec[0], -10.0);
        assert_eq!(inst.stage_costs[4].q_vec[0], -10.0);
        assert_eq!(inst.stage_costs[5].q_vec[0], -1000.0);
        assert_eq!(inst.with_horizon(9).stage_costs[8].q_vec[0], -1000.0);
        assert_eq!(inst.with_horizon(9).stage_costs[7].q_vec[0], -10.0);
    }

    #[test]
    fn example1_rows_select_branch() {
        // v = 1 forces x2 = x1 ≥ 0; v = 0 forces x2 = -x1 ≤ 0.
        let inst = example1(3, 0.5);
        let ok = |x1: f64, x2: f64, v: f64| {
            let x = DVector::from_element(1, x1);
            let u = DVector::from_vec(vec![0.0, x2]);
            let v = DVector::from_element(1, v);
            inst.constraints
                .mixed
                .iter()
                .all(|r| (r.lo..=r.hi).contains(&r.eval(&x, &u, &v)))
        };
        assert!(ok(0.4, 0.4, 1.0));
        assert!(!ok(0.4, -0.4, 1.0));
        assert!(!ok(0.4, 0.4, 0.0));
        assert!(ok(-0.3, 0.3, 0.0));
        assert!(!ok(-0.3, -0.3, 0.0));
        assert!(!ok(-0.3, 0.3, 1.0));
    }

    #[test]
    fn builtin_lookup() {
        assert_eq!(builtin("example2:30", Some(40), Some(&[0.1])).unwrap().nx(), 30);
        assert_eq!(builtin("illustrative", None, None).unwrap().horizon, 30);
        assert!(builtin("example2:0", None, None).is_none());
        assert!(builtin("nope", None, None).is_none());
    }
}
