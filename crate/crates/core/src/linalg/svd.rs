//! Thin SVD by one-sided (Hestenes) Jacobi rotations, and a power-iteration
//! estimate of the spectral norm.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{LinalgError, Matrix, Vector};

const MAX_SWEEPS: usize = 100;

/// `A = U · diag(σ) · Vᵀ` with `k = min(rows, cols)`: `u` is `rows × k` with
/// orthonormal columns, `sigma` is descending and nonnegative, `vt` is
/// `k × cols` with orthonormal rows.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vector,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn sigma_max(&self) -> f64 {
        if self.sigma.is_empty() {
            0.0
        } else {
            self.sigma[0]
        }
    }

    pub fn sigma_min(&self) -> f64 {
        if self.sigma.is_empty() {
            0.0
        } else {
            self.sigma[self.sigma.dim() - 1]
        }
    }

    pub fn reconstruct(&self) -> Matrix {
        let k = self.sigma.dim();
        Matrix::from_fn(self.u.rows(), self.vt.cols(), |i, j| {
            (0..k)
                .map(|l| self.u[(i, l)] * self.sigma[l] * self.vt[(l, j)])
                .sum()
        })
    }
}

/// Thin singular value decomposition.
pub fn svd(a: &Matrix) -> Result<SvdResult, LinalgError> {
    if a.rows() >= a.cols() {
        let (u, sigma, v) = jacobi_tall(a)?;
        Ok(SvdResult {
            u,
            sigma,
            vt: v.transpose(),
        })
    } else {
        // A = (Aᵀ)ᵀ = (U' Σ V'ᵀ)ᵀ = V' Σ U'ᵀ
        let (u_t, sigma, v_t) = jacobi_tall(&a.transpose())?;
        Ok(SvdResult {
            u: v_t,
            sigma,
            vt: u_t.transpose(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided Jacobi on a matrix with `rows >= cols`. Returns `(U, σ, V)` with
/// `V` square.
fn jacobi_tall(a: &Matrix) -> Result<(Matrix, Vector, Matrix), LinalgError> {
    let (m, n) = a.shape();
    if !a.is_finite() {
        return Err(LinalgError::NoConvergence {
            sweeps: 0,
            residual: f64::NAN,
        });
    }
    // Column-major working copies.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j).into_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // Pairs are rotated until every pair of columns is orthogonal to working
    // precision relative to the product of their norms.
    let tol = (m.max(1) as f64) * f64::EPSILON;
    let mut converged = n < 2;
    let mut residual = 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        residual = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma == 0.0 {
                    continue;
                }
                let off = gamma.abs() / scale;
                residual = f64::max(residual, off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps, residual });
    }

    let norms: Vec<f64> = w.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma_max = order.first().map_or(0.0, |&i| norms[i]);
    let null_threshold = sigma_max * f64::EPSILON * (m.max(n) as f64);
    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        if s > null_threshold && s > 0.0 {
            u_cols.push(Some(w[j].iter().map(|x| x / s).collect()));
        } else {
            u_cols.push(None);
        }
    }
    complete_orthonormal(&mut u_cols, m);

    let u = Matrix::from_fn(m, n, |i, j| u_cols[j].as_ref().unwrap()[i]);
    let sigma = Vector::new(order.iter().map(|&j| norms[j]).collect());
    let vmat = Matrix::from_fn(n, n, |i, j| v[order[j]][i]);
    Ok((u, sigma, vmat))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills missing columns (numerically null directions) with unit vectors
/// orthogonal to all others, by Gram-Schmidt over the standard basis.
fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], m: usize) {
    let mut next_basis = 0;
    for j in 0..cols.len() {
        if cols[j].is_some() {
            continue;
        }
        loop {
            assert!(
                next_basis < m,
                "orthonormal completion ran out of basis vectors"
            );
            let mut cand = vec![0.0; m];
            cand[next_basis] = 1.0;
            next_basis += 1;
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let proj = dot(&cand, other);
                    for (c, o) in cand.iter_mut().zip(other) {
                        *c -= proj * o;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 0.5 {
                cols[j] = Some(cand.into_iter().map(|x| x / norm).collect());
                break;
            }
        }
    }
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// Stops once the eigen-residual `‖AᵀA v − θ v‖` drops below `tol·θ`; if that
/// does not happen within the iteration cap, the full SVD is used instead.
pub fn spectral_norm(a: &Matrix, tol: f64) -> f64 {
    assert!(tol > 0.0, "spectral_norm: tol must be positive");
    let n = a.cols();
    if n == 0 || a.rows() == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = Vector::new((0..n).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect());
    let nv = v.norm();
    v = v.scale(1.0 / nv);
    const MAX_ITERS: usize = 2_000;
    for _ in 0..MAX_ITERS {
        let av = a.mul_vec(&v);
        let w = a.tr_mul_vec(&av);
        let theta = av.norm_sq();
        if theta == 0.0 {
            // v is in the null space; A may still be nonzero.
            break;
        }
        let mut r = w.clone();
        r.axpy(-theta, &v);
        if r.norm() <= tol * theta {
            return theta.sqrt();
        }
        let nw = w.norm();
        v = w.scale(1.0 / nw);
    }
    svd(a).map(|s| s.sigma_max()).unwrap_or(f64::NAN)
}
