//! Dense QP backend: symmetric indefinite factorization of the full KKT matrix.

use nalgebra::{DMatrix, DVector};

use super::{KktSystem, QpError};
use crate::numerics::{min_eigenvalue_symmetric, SymmetricIndefiniteFactor};

/// `min ½zᵀHz + gᵀz + c  s.t.  Ez = e, Cz ≤ d`, all matrices dense.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c0: f64,
    pub e_mat: DMatrix<f64>,
    pub e_vec: DVector<f64>,
    pub c_mat: DMatrix<f64>,
    pub d_vec: DVector<f64>,
}

impl DenseQp {
    /// Symmetrizes `h`. Panics on inconsistent shapes.
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        c0: f64,
        e_mat: DMatrix<f64>,
        e_vec: DVector<f64>,
        c_mat: DMatrix<f64>,
        d_vec: DVector<f64>,
    ) -> Self {
        let n = g.len();
        assert_eq!(h.shape(), (n, n), "H shape");
        assert_eq!(e_mat.shape(), (e_vec.len(), n), "E shape");
        assert_eq!(c_mat.shape(), (d_vec.len(), n), "C shape");
        let h = (&h + h.transpose()) * 0.5;
        Self {
            h,
            g,
            c0,
            e_mat,
            e_vec,
            c_mat,
            d_vec,
        }
    }

    /// Orthonormal basis of the nullspace of `E`.
    fn nullspace(&self) -> DMatrix<f64> {
        let n = self.num_vars();
        let m = self.num_eq();
        if m == 0 {
            return DMatrix::identity(n, n);
        }
        // Pad to at least n rows so the SVD returns a full right basis.
        let mut padded = DMatrix::zeros(m.max(n), n);
        padded.rows_mut(0, m).copy_from(&self.e_mat);
        let svd = padded.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let smax = svd.singular_values.max();
        let cut = 1e-10 * smax.max(1.0);
        let cols: Vec<_> = (0..n)
            .filter(|&i| svd.singular_values[i] <= cut)
            .map(|i| v_t.row(i).transpose())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }
}

impl KktSystem for DenseQp {
    type Factor = SymmetricIndefiniteFactor;

    fn num_vars(&self) -> usize {
        self.g.len()
    }
    fn num_eq(&self) -> usize {
        self.e_vec.len()
    }
    fn num_ineq(&self) -> usize {
        self.d_vec.len()
    }
    fn hess_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.h * z
    }
    fn grad(&self) -> &DVector<f64> {
        &self.g
    }
    fn constant(&self) -> f64 {
        self.c0
    }
    fn eq_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.e_mat * z
    }
    fn eq_tmul(&self, y: &DVector<f64>) -> DVector<f64> {
        self.e_mat.tr_mul(y)
    }
    fn eq_rhs(&self) -> &DVector<f64> {
        &self.e_vec
    }
    fn in_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.c_mat * z
    }
    fn in_tmul(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.c_mat.tr_mul(lambda)
    }
    fn in_rhs(&self) -> &DVector<f64> {
        &self.d_vec
    }

    fn initial_point(&self) -> DVector<f64> {
        // Least-norm solution of Ez = e.
        if self.num_eq() == 0 {
            return DVector::zeros(self.num_vars());
        }
        let svd = self.e_mat.clone().svd(true, true);
        svd.solve(&self.e_vec, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(self.num_vars()))
    }

    fn check_convex(&self) -> Result<(), QpError> {
        let z = self.nullspace();
        if z.ncols() == 0 {
            return Ok(());
        }
        let reduced = z.transpose() * &self.h * &z;
        let min_eig = min_eigenvalue_symmetric(&reduced).map_err(|e| QpError::Factorization(e.to_string()))?;
        if min_eig < -1e-9 * (1.0 + self.h.amax()) {
            return Err(QpError::NonconvexRejected(min_eig));
        }
        Ok(())
    }

    fn factor(&self, sigma: &DVector<f64>) -> Result<Self::Factor, QpError> {
        let n = self.num_vars();
        let m = self.num_eq();
        let scaled = DMatrix::from_fn(self.c_mat.nrows(), n, |i, j| self.c_mat[(i, j)] * sigma[i]);
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n))
            .copy_from(&(&self.h + self.c_mat.tr_mul(&scaled)));
        k.view_mut((n, 0), (m, n)).copy_from(&self.e_mat);
        k.view_mut((0, n), (n, m)).copy_from(&self.e_mat.transpose());
        SymmetricIndefiniteFactor::new(&k).map_err(|e| QpError::Factorization(e.to_string()))
    }

    fn solve(&self, factor: &Self::Factor, rz: &DVector<f64>, re: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.num_vars();
        let m = self.num_eq();
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(rz);
        rhs.rows_mut(n, m).copy_from(re);
        let sol = factor.solve(&rhs);
        (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned())
    }

    fn phase_one(&self, prox: f64) -> (Self, Vec<usize>) {
        // Variables (z, t); Cz − t ≤ d, −t ≤ 0, min t + ½·prox·‖z‖².
        let n = self.num_vars();
        let mi = self.num_ineq();
        let mut h = DMatrix::identity(n + 1, n + 1) * prox;
        h[(n, n)] = prox;
        let mut g = DVector::zeros(n + 1);
        g[n] = 1.0;
        let mut e_mat = DMatrix::zeros(self.num_eq(), n + 1);
        e_mat.columns_mut(0, n).copy_from(&self.e_mat);
        let mut c_mat = DMatrix::zeros(mi + 1, n + 1);
        c_mat.view_mut((0, 0), (mi, n)).copy_from(&self.c_mat);
        c_mat.view_mut((0, n), (mi, 1)).fill(-1.0);
        c_mat[(mi, n)] = -1.0;
        let mut d_vec = DVector::zeros(mi + 1);
        d_vec.rows_mut(0, mi).copy_from(&self.d_vec);
        (
            DenseQp::new(h, g, 0.0, e_mat, self.e_vec.clone(), c_mat, d_vec),
            vec![n],
        )
    }
}
