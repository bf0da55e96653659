//! Reference implementations that tests compare the library against.
//!
//! Each routine here is deliberately written the slow, obvious way and shares
//! no code with the path it checks.

#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::Matrix;

/// Entrywise triple loop.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix by the classical two-sided cyclic Jacobi
/// method, unsorted.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigenvalues: not square");
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).collect())
        .collect();
    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let total: f64 = m.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Layer outputs of a bias-free ReLU network computed entry by entry: hidden
/// layers apply `max(0, ·)`, the last layer is linear.
pub fn relu_net_outputs(x: &Matrix, weights: &[Matrix]) -> Vec<Matrix> {
    let mut outs = vec![x.clone()];
    for (l, w) in weights.iter().enumerate() {
        let prev = outs.last().unwrap();
        let mut next = Matrix::zeros(prev.rows(), w.cols());
        for i in 0..prev.rows() {
            for j in 0..w.cols() {
                let mut s = 0.0;
                for k in 0..prev.cols() {
                    s += prev[(i, k)] * w[(k, j)];
                }
                next[(i, j)] = if l + 1 < weights.len() && s < 0.0 {
                    0.0
                } else {
                    s
                };
            }
        }
        outs.push(next);
    }
    outs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let mut e = symmetric_eigenvalues(&a);
        e.sort_by(|x, y| x.total_cmp(y));
        assert!((e[0] - 1.0).abs() < 1e-14);
        assert!((e[1] - 3.0).abs() < 1e-14);
    }
}
