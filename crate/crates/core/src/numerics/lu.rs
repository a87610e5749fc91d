//! LU with partial pivoting and a 1-norm condition estimate.

use nalgebra::{DMatrix, DVector};

use super::NumericsError;

#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
    norm1: f64,
}

impl DenseLu {
    /// Fails only on an exactly zero pivot column; use [`DenseLu::rcond`] to
    /// judge near-singularity.
    pub fn new(m: DMatrix<f64>) -> Result<Self, NumericsError> {
        if !m.is_square() {
            return Err(NumericsError::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        let n = m.nrows();
        let norm1 = (0..n)
            .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut lu = m;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut best, mut p) = (0.0, k);
            for i in k..n {
                if lu[(i, k)].abs() > best {
                    best = lu[(i, k)].abs();
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(NumericsError::Singular(format!("zero pivot in column {k}")));
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                lu[(i, k)] /= pivot;
            }
            for j in k + 1..n {
                let ukj = lu[(k, j)];
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    lu[(i, j)] -= lu[(i, k)] * ukj;
                }
            }
        }
        Ok(Self { lu, perm, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let yj = y[j];
            for i in j + 1..n {
                y[i] -= self.lu[(i, j)] * yj;
            }
        }
        for j in (0..n).rev() {
            y[j] /= self.lu[(j, j)];
            let yj = y[j];
            for i in 0..j {
                y[i] -= self.lu[(i, j)] * yj;
            }
        }
        DVector::from_vec(y)
    }

    /// Solves `Mᵀ x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut z = b.clone_owned();
        for j in 0..n {
            let mut acc = z[j];
            for i in 0..j {
                acc -= self.lu[(i, j)] * z[i];
            }
            z[j] = acc / self.lu[(j, j)];
        }
        for j in (0..n).rev() {
            let mut acc = z[j];
            for i in j + 1..n {
                acc -= self.lu[(i, j)] * z[i];
            }
            z[j] = acc;
        }
        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// Reciprocal 1-norm condition estimate (Hager–Higham).
    pub fn rcond(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.abs()))
                .fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if iter > 0 && (zmax <= z.dot(&x) || j == last_j) {
                break;
            }
            last_j = j;
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
        // Alternating-sign probe guards against the classic Hager failure cases.
        let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
        let alt = DVector::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / denom)
        });
        let alt_est = 2.0 * self.solve(&alt).iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        let inv_norm = est.max(alt_est);
        if !inv_norm.is_finite() || self.norm1 == 0.0 {
            return 0.0;
        }
        1.0 / (self.norm1 * inv_norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_transposes() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let lu = DenseLu::new(m.clone()).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((&m * lu.solve(&b) - &b).amax() < 1e-13);
        assert!((m.transpose() * lu.solve_transpose(&b) - &b).amax() < 1e-13);
    }

    #[test]
    fn condition_estimate_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-6, 10.0]));
        let rc = DenseLu::new(m).unwrap().rcond();
        assert!((rc - 1e-7).abs() < 1e-9, "{rc}");
    }

    #[test]
    fn exact_singularity() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let r = DenseLu::new(m);
        assert!(r.is_err() || r.unwrap().rcond() < 1e-15);
    }
}
