//! Symmetric indefinite `P K Pᵀ = L D Lᵀ` with Bunch–Kaufman pivoting.

use nalgebra::{DMatrix, DVector};

use super::NumericsError;

/// Diagonal shift substituted for a pivot column that is numerically zero.
pub const ZERO_PIVOT_REGULARIZATION: f64 = 1e-10;

const BK_ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + √17) / 8

#[derive(Debug, Clone)]
pub struct SymmetricIndefiniteFactor {
    l: DMatrix<f64>,
    diag: Vec<f64>,
    /// `sub[k]` couples `k` and `k+1` in a 2×2 block; zero otherwise.
    sub: Vec<f64>,
    two_by_two: Vec<bool>,
    perm: Vec<usize>,
    regularized: usize,
}

impl SymmetricIndefiniteFactor {
    /// Factors `k` reading its lower triangle only.
    pub fn new(k: &DMatrix<f64>) -> Result<Self, NumericsError> {
        if !k.is_square() {
            return Err(NumericsError::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        let n = k.nrows();
        let mut a = DMatrix::from_fn(n, n, |i, j| if i >= j { k[(i, j)] } else { k[(j, i)] });
        if a.iter().any(|x| !x.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        // Zero pivots are judged against the original row of the pivot, so
        // large entries elsewhere cannot mask a small but valid pivot.
        let row_scale: Vec<f64> = (0..n).map(|i| a.row(i).amax().max(f64::MIN_POSITIVE)).collect();

        let mut l = DMatrix::identity(n, n);
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n];
        let mut two_by_two = vec![false; n];
        let mut perm: Vec<usize> = (0..n).collect();
        let mut regularized = 0;

        let mut k = 0;
        while k < n {
            let akk = a[(k, k)].abs();
            let (mut lambda, mut r) = (0.0, k);
            for i in k + 1..n {
                if a[(i, k)].abs() > lambda {
                    lambda = a[(i, k)].abs();
                    r = i;
                }
            }

            let mut block = 1;
            if akk.max(lambda) <= 1e3 * f64::EPSILON * row_scale[perm[k]] {
                a[(k, k)] = ZERO_PIVOT_REGULARIZATION;
                regularized += 1;
            } else if akk < BK_ALPHA * lambda {
                let sigma = (k..n).filter(|&j| j != r).map(|j| a[(r, j)].abs()).fold(0.0, f64::max);
                if akk * sigma >= BK_ALPHA * lambda * lambda {
                    // keep the 1×1 pivot at k
                } else if a[(r, r)].abs() >= BK_ALPHA * sigma {
                    swap_sym(&mut a, &mut l, &mut perm, k, r);
                } else {
                    swap_sym(&mut a, &mut l, &mut perm, k + 1, r);
                    block = 2;
                }
            }

            if block == 1 {
                let d = a[(k, k)];
                diag[k] = d;
                for i in k + 1..n {
                    l[(i, k)] = a[(i, k)] / d;
                }
                for j in k + 1..n {
                    let ljk = a[(j, k)];
                    if ljk == 0.0 {
                        continue;
                    }
                    for i in j..n {
                        a[(i, j)] -= l[(i, k)] * ljk;
                        a[(j, i)] = a[(i, j)];
                    }
                }
                k += 1;
            } else {
                let (d11, d21, d22) = (a[(k, k)], a[(k + 1, k)], a[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                diag[k] = d11;
                diag[k + 1] = d22;
                sub[k] = d21;
                two_by_two[k] = true;
                for i in k + 2..n {
                    let (c1, c2) = (a[(i, k)], a[(i, k + 1)]);
                    l[(i, k)] = (c1 * d22 - c2 * d21) / det;
                    l[(i, k + 1)] = (c2 * d11 - c1 * d21) / det;
                }
                for j in k + 2..n {
                    let (c1, c2) = (a[(j, k)], a[(j, k + 1)]);
                    for i in j..n {
                        a[(i, j)] -= l[(i, k)] * c1 + l[(i, k + 1)] * c2;
                        a[(j, i)] = a[(i, j)];
                    }
                }
                k += 2;
            }
        }

        Ok(Self {
            l,
            diag,
            sub,
            two_by_two,
            perm,
            regularized,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of pivots replaced by [`ZERO_PIVOT_REGULARIZATION`].
    pub fn regularized_pivots(&self) -> usize {
        self.regularized
    }

    /// Inertia `(positive, negative, zero)` of the factored matrix.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let (mut pos, mut neg, mut zero) = (0, 0, 0);
        let mut k = 0;
        while k < self.dim() {
            if self.two_by_two[k] {
                let det = self.diag[k] * self.diag[k + 1] - self.sub[k] * self.sub[k];
                if det < 0.0 {
                    pos += 1;
                    neg += 1;
                } else if self.diag[k] + self.diag[k + 1] > 0.0 {
                    pos += 2;
                } else {
                    neg += 2;
                }
                k += 2;
            } else {
                match self.diag[k].partial_cmp(&0.0) {
                    Some(std::cmp::Ordering::Greater) => pos += 1,
                    Some(std::cmp::Ordering::Less) => neg += 1,
                    _ => zero += 1,
                }
                k += 1;
            }
        }
        (pos, neg, zero)
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for i in j + 1..n {
                    y[i] -= self.l[(i, j)] * yj;
                }
            }
        }
        let mut k = 0;
        while k < n {
            if self.two_by_two[k] {
                let (d11, d21, d22) = (self.diag[k], self.sub[k], self.diag[k + 1]);
                let det = d11 * d22 - d21 * d21;
                let (b1, b2) = (y[k], y[k + 1]);
                y[k] = (d22 * b1 - d21 * b2) / det;
                y[k + 1] = (d11 * b2 - d21 * b1) / det;
                k += 2;
            } else {
                y[k] /= self.diag[k];
                k += 1;
            }
        }
        for j in (0..n).rev() {
            let mut acc = y[j];
            for i in j + 1..n {
                acc -= self.l[(i, j)] * y[i];
            }
            y[j] = acc;
        }
        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

fn swap_sym(a: &mut DMatrix<f64>, l: &mut DMatrix<f64>, perm: &mut [usize], i: usize, j: usize) {
    if i == j {
        return;
    }
    a.swap_rows(i, j);
    a.swap_columns(i, j);
    for c in 0..i.min(j) {
        l.swap((i, c), (j, c));
    }
    perm.swap(i, j);
}

/// Solves `K x = b` for symmetric, possibly indefinite `K`.
///
/// Zero pivots are replaced by [`ZERO_PIVOT_REGULARIZATION`] and one step of
/// iterative refinement is taken against the original `K`. The system is
/// reported singular when `‖Kx − b‖₂ > 1e−8·(1 + ‖b‖₂)` afterwards.
pub fn solve_symmetric_indefinite(k: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, NumericsError> {
    if b.len() != k.nrows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "rhs has {} entries, matrix is {}x{}",
            b.len(),
            k.nrows(),
            k.ncols()
        )));
    }
    let fact = SymmetricIndefiniteFactor::new(k)?;
    let ksym = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| if i >= j { k[(i, j)] } else { k[(j, i)] });
    let mut x = fact.solve(b);
    let r = b - &ksym * &x;
    x += fact.solve(&r);
    let res = (b - &ksym * &x).norm();
    if !res.is_finite() || res > 1e-8 * (1.0 + b.norm()) {
        return Err(NumericsError::Singular(format!(
            "residual {res:.3e} after regularization"
        )));
    }
    Ok(x)
}
