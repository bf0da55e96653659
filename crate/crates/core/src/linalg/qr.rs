//! Householder QR, least-squares solves, and Cholesky factorization.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{gaussian_matrix, LinalgError, Matrix, Rng, Vector};

/// Householder QR of a matrix with `rows >= cols`.
#[derive(Debug, Clone)]
pub struct Qr {
    rows: usize,
    cols: usize,
    /// Reflector vectors, one per column, each of length `rows - k`.
    reflectors: Vec<Vec<f64>>,
    r: Matrix,
}

impl Qr {
    pub fn new(a: &Matrix) -> Result<Self, LinalgError> {
        let (m, n) = a.shape();
        if m < n {
            return Err(LinalgError::DimensionMismatch {
                op: "qr (needs rows >= cols)",
                left: a.shape(),
                right: (n, n),
            });
        }
        let mut r = a.clone();
        let mut reflectors = Vec::with_capacity(n);
        for k in 0..n {
            let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                reflectors.push(vec![0.0; m - k]);
                continue;
            }
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= vnorm;
            }
            // R[k.., k..] -= 2 v (vᵀ R[k.., k..])
            for j in k..n {
                let proj: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
                for i in k..m {
                    r[(i, j)] -= 2.0 * v[i - k] * proj;
                }
            }
            reflectors.push(v);
        }
        Ok(Qr {
            rows: m,
            cols: n,
            reflectors,
            r,
        })
    }

    /// Upper-triangular `cols × cols` factor.
    pub fn r(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.cols, |i, j| {
            if i <= j {
                self.r[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Thin `rows × cols` orthonormal factor.
    pub fn q(&self) -> Matrix {
        let mut q = Matrix::zeros(self.rows, self.cols);
        for j in 0..self.cols {
            let mut e = vec![0.0; self.rows];
            e[j] = 1.0;
            self.apply_q(&mut e);
            for i in 0..self.rows {
                q[(i, j)] = e[i];
            }
        }
        q
    }

    /// `x ← Q x` for a full-length vector.
    fn apply_q(&self, x: &mut [f64]) {
        for k in (0..self.cols).rev() {
            self.reflect(k, x);
        }
    }

    /// `x ← Qᵀ x` for a full-length vector.
    fn apply_qt(&self, x: &mut [f64]) {
        for k in 0..self.cols {
            self.reflect(k, x);
        }
    }

    fn reflect(&self, k: usize, x: &mut [f64]) {
        let v = &self.reflectors[k];
        let proj: f64 = v.iter().zip(&x[k..]).map(|(a, b)| a * b).sum();
        for (xi, vi) in x[k..].iter_mut().zip(v) {
            *xi -= 2.0 * vi * proj;
        }
    }

    fn check_rank(&self) -> Result<(), LinalgError> {
        let diag_max = (0..self.cols).fold(0.0f64, |m, i| m.max(self.r[(i, i)].abs()));
        let tol = diag_max * f64::EPSILON * (self.rows as f64);
        if diag_max == 0.0 || (0..self.cols).any(|i| self.r[(i, i)].abs() <= tol) {
            return Err(LinalgError::Singular);
        }
        Ok(())
    }

    /// Least-squares solution of `A x ≈ b` (exact solve when `A` is square).
    pub fn solve(&self, b: &Vector) -> Result<Vector, LinalgError> {
        if b.dim() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "qr solve",
                left: (self.rows, self.cols),
                right: (b.dim(), 1),
            });
        }
        self.check_rank()?;
        let mut y = b.as_slice().to_vec();
        self.apply_qt(&mut y);
        let mut x = vec![0.0; self.cols];
        for i in (0..self.cols).rev() {
            let s: f64 = (i + 1..self.cols).map(|j| self.r[(i, j)] * x[j]).sum();
            x[i] = (y[i] - s) / self.r[(i, i)];
        }
        Ok(Vector::new(x))
    }

    /// Solves `Rᵀ z = b` (forward substitution).
    fn solve_rt(&self, b: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.cols];
        for i in 0..self.cols {
            let s: f64 = (0..i).map(|j| self.r[(j, i)] * z[j]).sum();
            z[i] = (b[i] - s) / self.r[(i, i)];
        }
        z
    }
}

/// Minimum-norm solution `W` of the underdetermined system `A W = B` for a
/// wide matrix `A` (`rows <= cols`) with full row rank: `W = Q R⁻ᵀ B` where
/// `Aᵀ = Q R`.
pub fn min_norm_solve(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "min_norm_solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let qr = Qr::new(&a.transpose())?;
    qr.check_rank()?;
    let q = qr.q();
    let mut w = Matrix::zeros(a.cols(), b.cols());
    for j in 0..b.cols() {
        let rhs: Vec<f64> = b.col(j).into_vec();
        let z = qr.solve_rt(&rhs);
        let col = q.mul_vec(&Vector::new(z));
        for i in 0..a.cols() {
            w[(i, j)] = col[i];
        }
    }
    Ok(w)
}

/// Lower-triangular `L` with `A = L Lᵀ`; fails unless `A` is symmetric
/// positive definite.
pub fn cholesky(a: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::NotPositiveDefinite);
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let s: f64 = (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum();
        let d = a[(j, j)] - s;
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite);
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            l[(i, j)] = (a[(i, j)] - s) / ljj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub(crate) fn cholesky_solve(l: &Matrix, b: &Vector) -> Vector {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (b[i] - s) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (y[i] - s) / l[(i, i)];
    }
    Vector::new(x)
}

/// Random orthogonal matrix: the `Q` factor of a Gaussian matrix with the
/// signs of `R`'s diagonal absorbed, which makes it Haar distributed.
pub fn random_orthogonal(rng: &mut Rng, n: usize) -> Result<Matrix, LinalgError> {
    let g = gaussian_matrix(rng, n, n, 1.0);
    let qr = Qr::new(&g)?;
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}
