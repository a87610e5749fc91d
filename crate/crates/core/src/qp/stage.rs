//! Stage-structured QP backend: KKT solves by a Riccati recursion.
//!
//! Variables are ordered `z = [x₀, w₀, x₁, w₁, …, x_N, w_N]`; any block may be
//! empty. Equality rows are the dynamics `x_{k+1} − A_k x_k − B_k w_k = f_k`,
//! one block per stage except the last.

use nalgebra::{DMatrix, DVector};

use super::{DenseQp, KktSystem, QpError};
use crate::numerics::min_eigenvalue_symmetric;

/// One stage of a [`StageQp`].
///
/// Cost `½[x;w]ᵀ[H_xx H_wxᵀ; H_wx H_ww][x;w] + g_xᵀx + g_wᵀw`, rows
/// `C_x x + C_w w ≤ d`, link `x⁺ = A x + B w + f` (zero rows on the last stage).
#[derive(Debug, Clone, PartialEq)]
pub struct QpStage {
    pub h_xx: DMatrix<f64>,
    pub h_wx: DMatrix<f64>,
    pub h_ww: DMatrix<f64>,
    pub g_x: DVector<f64>,
    pub g_w: DVector<f64>,
    pub c_x: DMatrix<f64>,
    pub c_w: DMatrix<f64>,
    pub d: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DVector<f64>,
}

impl QpStage {
    /// Zero cost, no rows, no link.
    pub fn empty(nx: usize, nw: usize) -> Self {
        Self {
            h_xx: DMatrix::zeros(nx, nx),
            h_wx: DMatrix::zeros(nw, nx),
            h_ww: DMatrix::zeros(nw, nw),
            g_x: DVector::zeros(nx),
            g_w: DVector::zeros(nw),
            c_x: DMatrix::zeros(0, nx),
            c_w: DMatrix::zeros(0, nw),
            d: DVector::zeros(0),
            a: DMatrix::zeros(0, nx),
            b: DMatrix::zeros(0, nw),
            f: DVector::zeros(0),
        }
    }

    pub fn nx(&self) -> usize {
        self.h_xx.nrows()
    }

    pub fn nw(&self) -> usize {
        self.h_ww.nrows()
    }

    pub fn num_rows(&self) -> usize {
        self.d.len()
    }

    /// Appends the row `cxᵀx + cwᵀw ≤ d`.
    pub fn push_row(&mut self, cx: &[f64], cw: &[f64], d: f64) {
        let m = self.num_rows();
        let take = |mat: &mut DMatrix<f64>| std::mem::replace(mat, DMatrix::zeros(0, 0));
        self.c_x = take(&mut self.c_x).insert_row(m, 0.0);
        self.c_w = take(&mut self.c_w).insert_row(m, 0.0);
        let d_old = std::mem::replace(&mut self.d, DVector::zeros(0));
        self.d = d_old.insert_row(m, d);
        for (j, &v) in cx.iter().enumerate() {
            self.c_x[(m, j)] = v;
        }
        for (j, &v) in cw.iter().enumerate() {
            self.c_w[(m, j)] = v;
        }
    }

    fn hessian(&self) -> DMatrix<f64> {
        let (nx, nw) = (self.nx(), self.nw());
        let mut h = DMatrix::zeros(nx + nw, nx + nw);
        h.view_mut((0, 0), (nx, nx)).copy_from(&self.h_xx);
        h.view_mut((nx, 0), (nw, nx)).copy_from(&self.h_wx);
        h.view_mut((0, nx), (nx, nw)).copy_from(&self.h_wx.transpose());
        h.view_mut((nx, nx), (nw, nw)).copy_from(&self.h_ww);
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageQp {
    stages: Vec<QpStage>,
    constant: f64,
    var_off: Vec<usize>,
    eq_off: Vec<usize>,
    in_off: Vec<usize>,
    g: DVector<f64>,
    e: DVector<f64>,
    d: DVector<f64>,
}

impl StageQp {
    /// Symmetrizes the Hessian blocks. Panics on inconsistent shapes.
    pub fn new(mut stages: Vec<QpStage>, constant: f64) -> Self {
        assert!(!stages.is_empty(), "at least one stage");
        let last = stages.len() - 1;
        for (k, st) in stages.iter_mut().enumerate() {
            let (nx, nw, m) = (st.nx(), st.nw(), st.num_rows());
            assert_eq!(st.h_wx.shape(), (nw, nx), "stage {k}: H_wx");
            assert_eq!((st.g_x.len(), st.g_w.len()), (nx, nw), "stage {k}: gradient");
            assert_eq!((st.c_x.shape(), st.c_w.shape()), ((m, nx), (m, nw)), "stage {k}: rows");
            let nn = st.a.nrows();
            assert_eq!(
                (st.a.ncols(), st.b.shape(), st.f.len()),
                (nx, (nn, nw), nn),
                "stage {k}: link"
            );
            st.h_xx = (&st.h_xx + st.h_xx.transpose()) * 0.5;
            st.h_ww = (&st.h_ww + st.h_ww.transpose()) * 0.5;
        }
        for k in 0..last {
            assert_eq!(stages[k].a.nrows(), stages[k + 1].nx(), "link {k} dimension");
        }
        assert_eq!(stages[last].a.nrows(), 0, "last stage has no link");

        let (mut var_off, mut eq_off, mut in_off) = (vec![0], vec![0], vec![0]);
        for st in &stages {
            var_off.push(var_off.last().unwrap() + st.nx() + st.nw());
            eq_off.push(eq_off.last().unwrap() + st.a.nrows());
            in_off.push(in_off.last().unwrap() + st.num_rows());
        }
        let g = DVector::from_iterator(
            *var_off.last().unwrap(),
            stages.iter().flat_map(|s| s.g_x.iter().chain(s.g_w.iter()).copied()),
        );
        let e = DVector::from_iterator(*eq_off.last().unwrap(), stages.iter().flat_map(|s| s.f.iter().copied()));
        let d = DVector::from_iterator(*in_off.last().unwrap(), stages.iter().flat_map(|s| s.d.iter().copied()));
        Self {
            stages,
            constant,
            var_off,
            eq_off,
            in_off,
            g,
            e,
            d,
        }
    }

    pub fn stages(&self) -> &[QpStage] {
        &self.stages
    }

    /// Offset of `x_k` in `z`; `w_k` follows at `+ nx_k`.
    pub fn var_offset(&self, k: usize) -> usize {
        self.var_off[k]
    }

    /// Stacked dense form of the same problem, assembled column by column
    /// from the structured operators.
    pub fn to_dense(&self) -> DenseQp {
        let n = self.num_vars();
        let stack = |f: &dyn Fn(&DVector<f64>) -> DVector<f64>, rows: usize| {
            let mut m = DMatrix::zeros(rows, n);
            let mut e = DVector::zeros(n);
            for j in 0..n {
                e[j] = 1.0;
                m.set_column(j, &f(&e));
                e[j] = 0.0;
            }
            m
        };
        DenseQp::new(
            stack(&|v| self.hess_mul(v), n),
            self.g.clone(),
            self.constant,
            stack(&|v| self.eq_mul(v), self.num_eq()),
            self.e.clone(),
            stack(&|v| self.in_mul(v), self.num_ineq()),
            self.d.clone(),
        )
    }

    fn xs<'a>(&self, z: &'a DVector<f64>, k: usize) -> nalgebra::DVectorView<'a, f64> {
        z.rows(self.var_off[k], self.stages[k].nx())
    }

    /// Riccati sweep with stage Hessians augmented by `CᵀΣC`.
    fn riccati(&self, sigma: Option<&DVector<f64>>) -> Result<RiccatiFactor, QpError> {
        let n = self.stages.len();
        let mut stages: Vec<StageFactor> = Vec::with_capacity(n);
        let mut worst_pivot = f64::INFINITY;
        let mut col: Vec<f64> = Vec::new();
        let mut nz: Vec<(usize, f64)> = Vec::new();
        let mut nz_start: Vec<usize> = Vec::new();
        for k in (0..n).rev() {
            let st = &self.stages[k];
            let (nx, nw) = (st.nx(), st.nw());
            let (mut q, mut s, mut r) = (st.h_xx.clone(), st.h_wx.clone(), st.h_ww.clone());
            if let Some(sig) = sigma {
                let sk = &sig.as_slice()[self.in_off[k]..self.in_off[k + 1]];
                let m = sk.len();
                if m > 0 {
                    let (cxs, cws) = (st.c_x.as_slice(), st.c_w.as_slice());
                    let cx = |a: usize| &cxs[a * m..(a + 1) * m];
                    let cw = |a: usize| &cws[a * m..(a + 1) * m];
                    let gram =
                        |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).zip(sk).map(|((a, b), w)| a * b * w).sum() };
                    // Rows often touch few states; zero columns add nothing.
                    let live_x: Vec<usize> = (0..nx).filter(|&a| cx(a).iter().any(|v| *v != 0.0)).collect();
                    for &b in &live_x {
                        for &a in &live_x {
                            q[(a, b)] += gram(cx(a), cx(b));
                        }
                        for a in 0..nw {
                            s[(a, b)] += gram(cw(a), cx(b));
                        }
                    }
                    for b in 0..nw {
                        for a in 0..=b {
                            let v = gram(cw(a), cw(b));
                            r[(a, b)] += v;
                            if a != b {
                                r[(b, a)] += v;
                            }
                        }
                    }
                }
            }
            // Stages are pushed in reverse, so the last entry is stage k + 1.
            if let Some(next) = stages.last() {
                // [A B]ᵀ P [A B] over the nonzeros of [A B], one column of
                // P[A B] at a time. Dynamics are often sparse.
                let nn = st.a.nrows();
                let ncols = nx + nw;
                nz.clear();
                nz_start.clear();
                for c in 0..ncols {
                    nz_start.push(nz.len());
                    let m = if c < nx { st.a.column(c) } else { st.b.column(c - nx) };
                    nz.extend(m.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)));
                }
                nz_start.push(nz.len());
                let p = next.p.as_slice();
                col.resize(nn, 0.0);
                for c in 0..ncols {
                    col.fill(0.0);
                    for &(j, m) in &nz[nz_start[c]..nz_start[c + 1]] {
                        for (ci, pj) in col.iter_mut().zip(&p[j * nn..(j + 1) * nn]) {
                            *ci += pj * m;
                        }
                    }
                    // The block with a < nx ≤ c is sᵀ and is not needed.
                    let rows = if c < nx { 0..ncols } else { nx..ncols };
                    for a in rows {
                        let acc: f64 = nz[nz_start[a]..nz_start[a + 1]].iter().map(|&(i, m)| m * col[i]).sum();
                        match (a < nx, c < nx) {
                            (true, true) => q[(a, c)] += acc,
                            (false, true) => s[(a - nx, c)] += acc,
                            _ => r[(a - nx, c - nx)] += acc,
                        }
                    }
                }
            }
            let (chol, min_pivot) = regularized_cholesky(r)?;
            worst_pivot = worst_pivot.min(min_pivot);
            let mut gain = -&s;
            for mut col in gain.column_iter_mut() {
                cholesky_solve(&chol, col.as_mut_slice());
            }
            // q += sᵀ gain, which is symmetric; symmetrize q on the way.
            if nw > 0 {
                let (ss, gs) = (s.as_slice(), gain.as_slice());
                for a in 0..nx {
                    let sa = &ss[a * nw..(a + 1) * nw];
                    for b in 0..=a {
                        let acc: f64 = sa.iter().zip(&gs[b * nw..(b + 1) * nw]).map(|(x, y)| x * y).sum();
                        let m = 0.5 * (q[(a, b)] + q[(b, a)]) + acc;
                        q[(a, b)] = m;
                        q[(b, a)] = m;
                    }
                }
            } else {
                for a in 0..nx {
                    for b in 0..a {
                        let m = 0.5 * (q[(a, b)] + q[(b, a)]);
                        q[(a, b)] = m;
                        q[(b, a)] = m;
                    }
                }
            }
            stages.push(StageFactor {
                chol,
                gain,
                s_bar: s,
                p: q,
            });
        }
        stages.reverse();
        let (x0_chol, p0_pivot) = regularized_cholesky(stages[0].p.clone())?;
        Ok(RiccatiFactor {
            stages,
            x0_chol,
            worst_pivot: worst_pivot.min(p0_pivot),
        })
    }
}

struct StageFactor {
    /// Lower Cholesky factor of `R̄_k`.
    chol: DMatrix<f64>,
    gain: DMatrix<f64>,
    s_bar: DMatrix<f64>,
    p: DMatrix<f64>,
}

pub struct RiccatiFactor {
    stages: Vec<StageFactor>,
    x0_chol: DMatrix<f64>,
    /// Smallest eigenvalue met among the pivots `R̄_k` (and `P₀`), before any
    /// regularization.
    worst_pivot: f64,
}

/// In-place lower Cholesky factor; the strict upper triangle is left as is.
/// False if a pivot is not positive.
fn cholesky_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = v / d;
        }
    }
    true
}

/// Overwrites `b` with `(LLᵀ)⁻¹ b`.
fn cholesky_solve(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[(i, k)] * b[k];
        }
        b[i] = v / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[(k, i)] * b[k];
        }
        b[i] = v / l[(i, i)];
    }
}

/// Cholesky of `m`, adding a growing multiple of `I` until it succeeds.
/// Also returns the smallest eigenvalue of `m` when regularization was
/// needed, `+∞` otherwise.
fn regularized_cholesky(m: DMatrix<f64>) -> Result<(DMatrix<f64>, f64), QpError> {
    let mut l = m.clone();
    if cholesky_in_place(&mut l) {
        return Ok((l, f64::INFINITY));
    }
    let min_eig = min_eigenvalue_symmetric(&m).map_err(|e| QpError::Factorization(e.to_string()))?;
    let scale = 1.0 + m.amax();
    let mut delta = 1e-12 * scale;
    while delta <= 1e6 * scale {
        let shift = (-min_eig).max(0.0) + delta;
        let mut l = &m + DMatrix::identity(m.nrows(), m.ncols()) * shift;
        if cholesky_in_place(&mut l) {
            return Ok((l, min_eig));
        }
        delta *= 100.0;
    }
    Err(QpError::Factorization("Riccati pivot could not be regularized".into()))
}

/// `out += M x`, column by column.
fn add_mul(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let rows = m.nrows();
    for (col, &xj) in m.as_slice().chunks_exact(rows.max(1)).zip(x) {
        if xj != 0.0 {
            for (o, &c) in out.iter_mut().zip(col) {
                *o += c * xj;
            }
        }
    }
}

/// `out += Mᵀ y`.
fn add_tr_mul(m: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    let rows = m.nrows();
    if rows == 0 {
        return;
    }
    for (col, o) in m.as_slice().chunks_exact(rows).zip(out.iter_mut()) {
        *o += col.iter().zip(y).map(|(c, v)| c * v).sum::<f64>();
    }
}

/// `out −= Mᵀ y`.
fn sub_tr_mul(m: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    let rows = m.nrows();
    if rows == 0 {
        return;
    }
    for (col, o) in m.as_slice().chunks_exact(rows).zip(out.iter_mut()) {
        *o -= col.iter().zip(y).map(|(c, v)| c * v).sum::<f64>();
    }
}

impl KktSystem for StageQp {
    type Factor = RiccatiFactor;

    fn num_vars(&self) -> usize {
        *self.var_off.last().unwrap()
    }
    fn num_eq(&self) -> usize {
        *self.eq_off.last().unwrap()
    }
    fn num_ineq(&self) -> usize {
        *self.in_off.last().unwrap()
    }

    fn hess_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(z.len());
        let (zs, os) = (z.as_slice(), out.as_mut_slice());
        for (k, st) in self.stages.iter().enumerate() {
            let (ox, ow, oe) = (self.var_off[k], self.var_off[k] + st.nx(), self.var_off[k + 1]);
            let (x, w) = (&zs[ox..ow], &zs[ow..oe]);
            let (out_x, out_w) = os[ox..oe].split_at_mut(st.nx());
            add_mul(&st.h_xx, x, out_x);
            add_tr_mul(&st.h_wx, w, out_x);
            add_mul(&st.h_wx, x, out_w);
            add_mul(&st.h_ww, w, out_w);
        }
        out
    }

    fn grad(&self) -> &DVector<f64> {
        &self.g
    }

    fn constant(&self) -> f64 {
        self.constant
    }

    fn eq_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_eq());
        let (zs, os) = (z.as_slice(), out.as_mut_slice());
        for (k, st) in self.stages.iter().enumerate().take(self.stages.len() - 1) {
            let (ox, ow, on) = (self.var_off[k], self.var_off[k] + st.nx(), self.var_off[k + 1]);
            let o = &mut os[self.eq_off[k]..self.eq_off[k + 1]];
            o.copy_from_slice(&zs[on..on + o.len()]);
            for v in o.iter_mut() {
                *v = -*v;
            }
            add_mul(&st.a, &zs[ox..ow], o);
            add_mul(&st.b, &zs[ow..on], o);
            for v in o.iter_mut() {
                *v = -*v;
            }
        }
        out
    }

    fn eq_tmul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_vars());
        let (ys, os) = (y.as_slice(), out.as_mut_slice());
        for (k, st) in self.stages.iter().enumerate().take(self.stages.len() - 1) {
            let (ox, on) = (self.var_off[k], self.var_off[k + 1]);
            let yk = &ys[self.eq_off[k]..self.eq_off[k + 1]];
            for (o, &v) in os[on..on + yk.len()].iter_mut().zip(yk) {
                *o += v;
            }
            let (out_x, out_w) = os[ox..on].split_at_mut(st.nx());
            sub_tr_mul(&st.a, yk, out_x);
            sub_tr_mul(&st.b, yk, out_w);
        }
        out
    }

    fn eq_rhs(&self) -> &DVector<f64> {
        &self.e
    }

    fn in_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_ineq());
        let (zs, os) = (z.as_slice(), out.as_mut_slice());
        for (k, st) in self.stages.iter().enumerate() {
            let (ox, ow, on) = (self.var_off[k], self.var_off[k] + st.nx(), self.var_off[k + 1]);
            let o = &mut os[self.in_off[k]..self.in_off[k + 1]];
            add_mul(&st.c_x, &zs[ox..ow], o);
            add_mul(&st.c_w, &zs[ow..on], o);
        }
        out
    }

    fn in_tmul(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_vars());
        let (ls, os) = (lambda.as_slice(), out.as_mut_slice());
        for (k, st) in self.stages.iter().enumerate() {
            let (ox, on) = (self.var_off[k], self.var_off[k + 1]);
            let lk = &ls[self.in_off[k]..self.in_off[k + 1]];
            let (out_x, out_w) = os[ox..on].split_at_mut(st.nx());
            add_tr_mul(&st.c_x, lk, out_x);
            add_tr_mul(&st.c_w, lk, out_w);
        }
        out
    }

    fn in_rhs(&self) -> &DVector<f64> {
        &self.d
    }

    fn initial_point(&self) -> DVector<f64> {
        // w = 0, x₀ = 0, states simulated so that the dynamics hold exactly.
        let mut z = DVector::zeros(self.num_vars());
        for (k, st) in self.stages.iter().enumerate().take(self.stages.len() - 1) {
            let next = &st.a * self.xs(&z, k) + &st.f;
            z.rows_mut(self.var_off[k + 1], st.a.nrows()).copy_from(&next);
        }
        z
    }

    fn check_convex(&self) -> Result<(), QpError> {
        let mut stagewise = true;
        let mut scale: f64 = 1.0;
        for st in &self.stages {
            let h = st.hessian();
            scale = scale.max(h.amax());
            let me = min_eigenvalue_symmetric(&h).map_err(|e| QpError::Factorization(e.to_string()))?;
            if me < -1e-9 * (1.0 + h.amax()) {
                stagewise = false;
            }
        }
        if stagewise {
            return Ok(());
        }
        // Block-separable test failed; inspect the reduced Hessian through the
        // Riccati pivots, which are its Schur complements.
        let f = self.riccati(None)?;
        if f.worst_pivot < -1e-9 * scale {
            return Err(QpError::NonconvexRejected(f.worst_pivot));
        }
        Ok(())
    }

    fn factor(&self, sigma: &DVector<f64>) -> Result<Self::Factor, QpError> {
        self.riccati(Some(sigma))
    }

    fn solve(&self, factor: &Self::Factor, rz: &DVector<f64>, re: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.stages.len();
        let (rz, re) = (rz.as_slice(), re.as_slice());
        let max_nx = self.stages.iter().map(QpStage::nx).max().unwrap_or(0);
        // Backward pass: p_k in the x slots of `pz`, the feedforward in the w slots.
        let mut pz = vec![0.0; self.num_vars()];
        let mut t = vec![0.0; max_nx];
        for k in (0..n).rev() {
            let st = &self.stages[k];
            let fac = &factor.stages[k];
            let (nx, nw, nn) = (st.nx(), st.nw(), st.a.nrows());
            let (ox, ow, oe) = (self.var_off[k], self.var_off[k] + nx, self.eq_off[k]);
            // t = P_{k+1} f_k + p_{k+1}
            let t = &mut t[..nn];
            t.fill(0.0);
            if k + 1 < n {
                let on = self.var_off[k + 1];
                t.copy_from_slice(&pz[on..on + nn]);
                add_mul(&factor.stages[k + 1].p, &re[oe..oe + nn], t);
            }
            let (head, tail) = pz.split_at_mut(ow);
            let (px, pw) = (&mut head[ox..], &mut tail[..nw]);
            for (v, r) in pw.iter_mut().zip(&rz[ow..ow + nw]) {
                *v = -r;
            }
            add_tr_mul(&st.b, t, pw);
            cholesky_solve(&fac.chol, pw);
            for v in pw.iter_mut() {
                *v = -*v;
            }
            for (v, r) in px.iter_mut().zip(&rz[ox..ox + nx]) {
                *v = -r;
            }
            add_tr_mul(&st.a, t, px);
            add_tr_mul(&fac.s_bar, pw, px);
        }

        // Forward pass.
        let mut dz = DVector::zeros(self.num_vars());
        let mut dy = DVector::zeros(self.num_eq());
        let nx0 = self.stages[0].nx();
        let mut x: Vec<f64> = pz[..nx0].iter().map(|v| -v).collect();
        cholesky_solve(&factor.x0_chol, &mut x);
        let mut xn = vec![0.0; max_nx];
        for k in 0..n {
            let st = &self.stages[k];
            let fac = &factor.stages[k];
            let (nx, nw, nn) = (st.nx(), st.nw(), st.a.nrows());
            let (ox, ow, oe) = (self.var_off[k], self.var_off[k] + nx, self.eq_off[k]);
            let dzs = dz.as_mut_slice();
            dzs[ox..ow].copy_from_slice(&x[..nx]);
            let w = &mut dzs[ow..ow + nw];
            w.copy_from_slice(&pz[ow..ow + nw]);
            add_mul(&fac.gain, &x[..nx], w);
            if k + 1 < n {
                let xn = &mut xn[..nn];
                xn.copy_from_slice(&re[oe..oe + nn]);
                add_mul(&st.a, &x[..nx], xn);
                add_mul(&st.b, w, xn);
                let on = self.var_off[k + 1];
                let y = &mut dy.as_mut_slice()[oe..oe + nn];
                y.copy_from_slice(&pz[on..on + nn]);
                add_mul(&factor.stages[k + 1].p, xn, y);
                for v in y.iter_mut() {
                    *v = -*v;
                }
                x.resize(nn, 0.0);
                x.copy_from_slice(xn);
            }
        }
        (dz, dy)
    }

    fn phase_one(&self, prox: f64) -> (Self, Vec<usize>) {
        let mut stages = Vec::with_capacity(self.stages.len());
        let mut elastic_local = Vec::new();
        for (k, st) in self.stages.iter().enumerate() {
            let (nx, nw, m) = (st.nx(), st.nw(), st.num_rows());
            let extra = usize::from(m > 0);
            let nw2 = nw + extra;
            let mut s = QpStage::empty(nx, nw2);
            s.h_xx = DMatrix::identity(nx, nx) * prox;
            s.h_ww = DMatrix::identity(nw2, nw2) * prox;
            s.a = st.a.clone();
            s.f = st.f.clone();
            s.b = DMatrix::zeros(st.a.nrows(), nw2);
            s.b.columns_mut(0, nw).copy_from(&st.b);
            s.c_x = DMatrix::zeros(m + extra, nx);
            s.c_x.rows_mut(0, m).copy_from(&st.c_x);
            s.c_w = DMatrix::zeros(m + extra, nw2);
            s.c_w.view_mut((0, 0), (m, nw)).copy_from(&st.c_w);
            s.d = DVector::zeros(m + extra);
            s.d.rows_mut(0, m).copy_from(&st.d);
            if extra == 1 {
                s.c_w.view_mut((0, nw), (m + 1, 1)).fill(-1.0);
                s.g_w[nw] = 1.0;
                elastic_local.push((k, nx + nw));
            }
            stages.push(s);
        }
        let qp = StageQp::new(stages, 0.0);
        let elastic = elastic_local
            .into_iter()
            .map(|(k, local)| qp.var_offset(k) + local)
            .collect();
        (qp, elastic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve, QpSettings, QpStatus};
    use proptest::prelude::*;

    fn random_stage_qp(seed: &[f64], horizon: usize, nx: usize, nw: usize, free_x0: bool) -> StageQp {
        let mut it = seed.iter().copied().cycle();
        let mut next = move || it.next().unwrap();
        let mut stages = Vec::new();
        for k in 0..=horizon {
            let sx = if k == 0 && !free_x0 { 0 } else { nx };
            let sw = if k == horizon { 0 } else { nw };
            let mut st = QpStage::empty(sx, sw);
            let lx = DMatrix::from_fn(sx, sx, |_, _| next());
            st.h_xx = &lx * lx.transpose() + DMatrix::identity(sx, sx) * 0.1;
            let lw = DMatrix::from_fn(sw, sw, |_, _| next());
            st.h_ww = &lw * lw.transpose() + DMatrix::identity(sw, sw) * 0.1;
            st.g_x = DVector::from_fn(sx, |_, _| next());
            st.g_w = DVector::from_fn(sw, |_, _| next());
            if k < horizon {
                st.a = DMatrix::from_fn(nx, sx, |_, _| next());
                st.b = DMatrix::from_fn(nx, sw, |_, _| next());
                st.f = DVector::from_fn(nx, |_, _| next());
            }
            for j in 0..sw {
                let mut cw = vec![0.0; sw];
                cw[j] = 1.0;
                st.push_row(&vec![0.0; sx], &cw, 1.0 + next().abs());
                cw[j] = -1.0;
                st.push_row(&vec![0.0; sx], &cw, 1.0 + next().abs());
            }
            if sx > 0 {
                let cx: Vec<f64> = (0..sx).map(|_| next()).collect();
                st.push_row(&cx, &vec![0.0; sw], 2.0 + next().abs());
            }
            stages.push(st);
        }
        StageQp::new(stages, 0.5)
    }

    #[test]
    fn riccati_solve_matches_dense_kkt() {
        let seed: Vec<f64> = (0..97).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect();
        for &free_x0 in &[false, true] {
            let qp = random_stage_qp(&seed, 4, 3, 2, free_x0);
            let sigma = DVector::from_fn(qp.num_ineq(), |i, _| 0.3 + (i % 5) as f64);
            let rz = DVector::from_fn(qp.num_vars(), |i, _| (i as f64).sin());
            let re = DVector::from_fn(qp.num_eq(), |i, _| (i as f64).cos());
            let (dz, dy) = qp.solve(&qp.factor(&sigma).unwrap(), &rz, &re);
            let dense = qp.to_dense();
            let (dz2, dy2) = dense.solve(&dense.factor(&sigma).unwrap(), &rz, &re);
            assert!((&dz - &dz2).amax() < 1e-8, "dz mismatch {}", (&dz - &dz2).amax());
            assert!((&dy - &dy2).amax() < 1e-8, "dy mismatch");
        }
    }

    #[test]
    fn nonconvex_stage_is_rejected() {
        let mut st = QpStage::empty(0, 1);
        st.h_ww[(0, 0)] = -1.0;
        let qp = StageQp::new(vec![st], 0.0);
        assert!(matches!(qp.check_convex(), Err(QpError::NonconvexRejected(_))));
    }

    #[test]
    fn initial_point_satisfies_dynamics() {
        let seed: Vec<f64> = (0..61).map(|i| ((i * 13 % 17) as f64 - 8.0) / 5.0).collect();
        let qp = random_stage_qp(&seed, 5, 2, 1, false);
        let z = qp.initial_point();
        assert!((qp.eq_mul(&z) - qp.eq_rhs()).amax() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn stage_and_dense_backends_agree(
            seed in prop::collection::vec(-1.5f64..1.5, 40..80),
            horizon in 1usize..5,
        ) {
            let qp = random_stage_qp(&seed, horizon, 2, 2, false);
            let settings = QpSettings::default();
            let a = solve(&qp, &settings).unwrap();
            let b = solve(&qp.to_dense(), &settings).unwrap();
            prop_assert_eq!(a.status, b.status);
            if a.status == QpStatus::Optimal {
                prop_assert!((a.objective - b.objective).abs() < 1e-6 * (1.0 + a.objective.abs()));
                prop_assert!(a.kkt_residual <= 1e-7);
            }
        }
    }
}
