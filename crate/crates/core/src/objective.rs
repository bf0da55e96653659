//! Partitioned objectives `f(x, u)` and their assumption constants.
//!
//! Two objectives are interchangeable when they agree as functions of the
//! concatenated parameter `(x, u)`; the optimizers never look at the split.
//! The split matters for the constants below and for the diagnostics.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg::{cholesky, cholesky_solve, svd, LinalgError, Matrix, Rng, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("strong convexity constant must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("this objective does not provide an inner minimizer")]
    NoInnerMinimizer,
    #[error("inner minimizer residual {residual:e} exceeds tolerance {tolerance:e}")]
    InnerSolveInaccurate { residual: f64, tolerance: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The constants of the partial strong convexity assumptions.
///
/// * `mu`, `l1`: strong convexity and smoothness in `x`, uniformly over `u`
///   in the `r_u` ball.
/// * `l2`: smoothness of the outer loss `g` with `f = g ∘ h`.
/// * `g1`: Lipschitz constant of `h` in `u`.
/// * `g2`: Lipschitz constant of `∇₁f` in `u`.
/// * `r_x`, `r_u`: radii of the balls around the initial point in which the
///   above hold (`f64::INFINITY` when global).
/// * `f_star`: the global minimum value.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectiveConstants {
    pub mu: f64,
    pub l1: f64,
    pub l2: f64,
    pub g1: f64,
    pub g2: f64,
    pub r_x: f64,
    pub r_u: f64,
    pub kappa: f64,
    pub f_star: f64,
}

impl ObjectiveConstants {
    /// Validates the constants and fills in `kappa = l1 / mu`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu: f64,
        l1: f64,
        l2: f64,
        g1: f64,
        g2: f64,
        r_x: f64,
        r_u: f64,
        f_star: f64,
    ) -> Result<Self, ObjectiveError> {
        if !(mu > 0.0) {
            return Err(ObjectiveError::NonPositiveMu(mu));
        }
        if !(l1 >= mu) || !l1.is_finite() {
            return Err(ObjectiveError::InvalidConstants(alloc::format!(
                "need mu <= l1 < inf, got mu={mu}, l1={l1}"
            )));
        }
        if !(l2 > 0.0) || !(g1 >= 0.0) || !(g2 >= 0.0) || !(r_x > 0.0) || !(r_u > 0.0) {
            return Err(ObjectiveError::InvalidConstants(alloc::format!(
                "need l2 > 0, g1, g2 >= 0 and r_x, r_u > 0; got l2={l2}, g1={g1}, g2={g2}, r_x={r_x}, r_u={r_u}"
            )));
        }
        Ok(ObjectiveConstants {
            mu,
            l1,
            l2,
            g1,
            g2,
            r_x,
            r_u,
            kappa: l1 / mu,
            f_star,
        })
    }
}

/// `κ = L₁ / μ`.
pub fn condition_number(c: &ObjectiveConstants) -> Result<f64, ObjectiveError> {
    if !(c.mu > 0.0) {
        return Err(ObjectiveError::NonPositiveMu(c.mu));
    }
    Ok(c.l1 / c.mu)
}

/// An objective `f(x, u)` over `x ∈ ℝ^{d1}`, `u ∈ ℝ^{d2}`.
///
/// Implementations are immutable after construction, so a shared reference
/// can be evaluated from several threads.
pub trait PartitionedObjective {
    /// `(d1, d2)`.
    fn dims(&self) -> (usize, usize);

    fn eval(&self, x: &Vector, u: &Vector) -> f64;

    /// `∇₁f(x, u) = ∂f/∂x`.
    fn grad1(&self, x: &Vector, u: &Vector) -> Vector;

    /// `∇₂f(x, u) = ∂f/∂u`.
    fn grad2(&self, x: &Vector, u: &Vector) -> Vector;

    /// Both partial gradients; override when they share work.
    fn grads(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        (self.grad1(x, u), self.grad2(x, u))
    }

    /// `argmin_x f(x, u)`, when the objective can compute it exactly.
    fn inner_argmin(&self, _u: &Vector) -> Result<Vector, ObjectiveError> {
        Err(ObjectiveError::NoInnerMinimizer)
    }

    fn has_inner_argmin(&self) -> bool {
        false
    }

    fn constants(&self) -> ObjectiveConstants;

    fn f_star(&self) -> f64 {
        self.constants().f_star
    }
}

/// A ball `{ p : ‖p − center‖₂ ≤ radius }`; the radius may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    pub center: Vector,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: Vector, radius: f64) -> Self {
        assert!(radius >= 0.0, "ball radius must be nonnegative");
        BallSpec { center, radius }
    }

    pub fn contains(&self, p: &Vector) -> bool {
        self.radius.is_infinite() || self.center.dist(p) <= self.radius
    }

    /// Uniform sample from the ball. Infinite balls are sampled with radius
    /// `fallback_radius`.
    pub fn sample(&self, rng: &mut Rng, fallback_radius: f64) -> Vector {
        let d = self.center.dim();
        if d == 0 {
            return Vector::zeros(0);
        }
        let radius = if self.radius.is_finite() {
            self.radius
        } else {
            fallback_radius
        };
        let dir = crate::linalg::gaussian_vector(rng, d, 1.0);
        let n = dir.norm();
        if n == 0.0 {
            return self.center.clone();
        }
        let r = radius * rng.uniform().powf(1.0 / d as f64);
        self.center.add(&dir.scale(r / n))
    }
}

/// Central-difference estimates of `(∇₁f, ∇₂f)` with step `h`.
pub fn fd_grad<O: PartitionedObjective + ?Sized>(
    obj: &O,
    x: &Vector,
    u: &Vector,
    h: f64,
) -> (Vector, Vector) {
    assert!(h > 0.0, "fd_grad: step must be positive");
    let mut g1 = Vector::zeros(x.dim());
    let mut xp = x.clone();
    for i in 0..x.dim() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = obj.eval(&xp, u);
        xp[i] = orig - h;
        let fm = obj.eval(&xp, u);
        xp[i] = orig;
        g1[i] = (fp - fm) / (2.0 * h);
    }
    let mut g2 = Vector::zeros(u.dim());
    let mut up = u.clone();
    for i in 0..u.dim() {
        let orig = up[i];
        up[i] = orig + h;
        let fp = obj.eval(x, &up);
        up[i] = orig - h;
        let fm = obj.eval(x, &up);
        up[i] = orig;
        g2[i] = (fp - fm) / (2.0 * h);
    }
    (g1, g2)
}

/// `½ xᵀQx − bᵀx` as a partitioned objective with an empty `u` block.
///
/// A smooth strongly convex function satisfies every assumption with
/// `μ = λ_min(Q)`, `L₁ = L₂ = λ_max(Q)`, `G₁ = G₂ = 0` and infinite radii.
#[derive(Debug, Clone)]
pub struct StronglyConvexQuadratic {
    q: Matrix,
    b: Vector,
    minimizer: Vector,
    constants: ObjectiveConstants,
}

impl StronglyConvexQuadratic {
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn minimizer(&self) -> &Vector {
        &self.minimizer
    }
}

/// Embeds a positive definite quadratic.
pub fn embed_strongly_convex(
    q: Matrix,
    b: Vector,
) -> Result<StronglyConvexQuadratic, ObjectiveError> {
    let n = q.rows();
    if q.cols() != n || b.dim() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "embed_strongly_convex",
            left: q.shape(),
            right: (b.dim(), 1),
        }
        .into());
    }
    let scale = q.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 * scale {
                return Err(LinalgError::NotPositiveDefinite.into());
            }
        }
    }
    let l = cholesky(&q)?;
    let minimizer = cholesky_solve(&l, &b);
    let f_star = -0.5 * b.dot(&minimizer);
    let s = svd(&q)?;
    let lmax = s.sigma_max();
    let constants = ObjectiveConstants::new(
        s.sigma_min(),
        lmax,
        lmax,
        0.0,
        0.0,
        f64::INFINITY,
        f64::INFINITY,
        f_star,
    )?;
    Ok(StronglyConvexQuadratic {
        q,
        b,
        minimizer,
        constants,
    })
}

impl PartitionedObjective for StronglyConvexQuadratic {
    fn dims(&self) -> (usize, usize) {
        (self.q.rows(), 0)
    }

    fn eval(&self, x: &Vector, _u: &Vector) -> f64 {
        0.5 * x.dot(&self.q.mul_vec(x)) - self.b.dot(x)
    }

    fn grad1(&self, x: &Vector, _u: &Vector) -> Vector {
        self.q.mul_vec(x).sub(&self.b)
    }

    fn grad2(&self, _x: &Vector, _u: &Vector) -> Vector {
        Vector::zeros(0)
    }

    fn inner_argmin(&self, _u: &Vector) -> Result<Vector, ObjectiveError> {
        Ok(self.minimizer.clone())
    }

    fn has_inner_argmin(&self) -> bool {
        true
    }

    fn constants(&self) -> ObjectiveConstants {
        self.constants
    }
}

/// Any objective of concatenated parameters can be viewed through a
/// different split point; used to check that optimizers ignore the split.
pub fn concat_point(x: &Vector, u: &Vector) -> Vec<f64> {
    x.concat(u).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct HalfNormSq;
    impl PartitionedObjective for HalfNormSq {
        fn dims(&self) -> (usize, usize) {
            (2, 1)
        }
        fn eval(&self, x: &Vector, _u: &Vector) -> f64 {
            0.5 * x.norm_sq()
        }
        fn grad1(&self, x: &Vector, _u: &Vector) -> Vector {
            x.clone()
        }
        fn grad2(&self, _x: &Vector, _u: &Vector) -> Vector {
            Vector::zeros(1)
        }
        fn constants(&self) -> ObjectiveConstants {
            ObjectiveConstants::new(1.0, 1.0, 1.0, 0.0, 0.0, f64::INFINITY, f64::INFINITY, 0.0)
                .unwrap()
        }
    }

    struct Constant;
    impl PartitionedObjective for Constant {
        fn dims(&self) -> (usize, usize) {
            (2, 2)
        }
        fn eval(&self, _x: &Vector, _u: &Vector) -> f64 {
            3.5
        }
        fn grad1(&self, _x: &Vector, _u: &Vector) -> Vector {
            Vector::zeros(2)
        }
        fn grad2(&self, _x: &Vector, _u: &Vector) -> Vector {
            Vector::zeros(2)
        }
        fn constants(&self) -> ObjectiveConstants {
            ObjectiveConstants::new(1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 3.5).unwrap()
        }
    }

    fn constants(mu: f64, l1: f64) -> ObjectiveConstants {
        ObjectiveConstants::new(mu, l1, 1.0, 0.0, 0.0, f64::INFINITY, f64::INFINITY, 0.0).unwrap()
    }

    #[test]
    fn condition_number_is_ratio() {
        assert_eq!(condition_number(&constants(1.0, 1.0)).unwrap(), 1.0);
        assert_eq!(condition_number(&constants(0.25, 4.0)).unwrap(), 16.0);
        let c = constants(0.3, 7.0);
        assert_eq!(c.kappa, c.l1 / c.mu);
    }

    #[test]
    fn nonpositive_mu_is_rejected() {
        let mut c = constants(1.0, 2.0);
        c.mu = 0.0;
        assert!(condition_number(&c).is_err());
        assert!(ObjectiveConstants::new(-1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(ObjectiveConstants::new(2.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn fd_grad_of_half_norm() {
        let x = Vector::new(vec![1.0, 0.0]);
        let u = Vector::new(vec![0.3]);
        let (g1, g2) = fd_grad(&HalfNormSq, &x, &u, 1e-5);
        assert!((g1[0] - 1.0).abs() < 1e-8);
        assert!(g1[1].abs() < 1e-8);
        assert!(g2[0].abs() < 1e-12);
    }

    #[test]
    fn fd_grad_of_constant_is_zero() {
        let x = Vector::new(vec![0.2, -1.0]);
        let u = Vector::new(vec![4.0, 5.0]);
        let (g1, g2) = fd_grad(&Constant, &x, &u, 1e-4);
        assert!(g1.iter().chain(g2.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn identity_quadratic_is_perfectly_conditioned() {
        let quad = embed_strongly_convex(Matrix::identity(3), Vector::zeros(3)).unwrap();
        let c = quad.constants();
        assert_eq!((c.mu, c.l1, c.kappa), (1.0, 1.0, 1.0));
    }

    #[test]
    fn diagonal_quadratic_constants() {
        let quad =
            embed_strongly_convex(Matrix::diag(&[1.0, 10.0]), Vector::new(vec![1.0, 1.0])).unwrap();
        let c = quad.constants();
        assert!((c.mu - 1.0).abs() < 1e-14);
        assert!((c.l1 - 10.0).abs() < 1e-14);
        assert_eq!(c.l2, c.l1);
        assert_eq!((c.g1, c.g2), (0.0, 0.0));
        assert!(c.r_x.is_infinite() && c.r_u.is_infinite());
        // f* = -½ bᵀQ⁻¹b = -½ (1 + 0.1)
        assert!((c.f_star + 0.55).abs() < 1e-15);
        assert_eq!(quad.dims(), (2, 0));
        let g2 = quad.grad2(&Vector::new(vec![3.0, 4.0]), &Vector::zeros(0));
        assert!(g2.is_empty());
    }

    #[test]
    fn indefinite_or_asymmetric_quadratics_are_rejected() {
        let indefinite = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(embed_strongly_convex(indefinite, Vector::zeros(2)).is_err());
        let asym = Matrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]);
        assert!(embed_strongly_convex(asym, Vector::zeros(2)).is_err());
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences() {
        let q = Matrix::from_rows(&[[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]]);
        let b = Vector::new(vec![1.0, -1.0, 2.0]);
        let quad = embed_strongly_convex(q, b).unwrap();
        let x = Vector::new(vec![0.3, 0.7, -1.1]);
        let (fd1, _) = fd_grad(&quad, &x, &Vector::zeros(0), 1e-5);
        let g1 = quad.grad1(&x, &Vector::zeros(0));
        assert!(fd1.dist(&g1) <= 1e-8 * (1.0 + g1.norm()));
    }

    #[test]
    fn ball_sampling_stays_inside() {
        let ball = BallSpec::new(Vector::new(vec![1.0, 2.0, 3.0]), 0.5);
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            assert!(ball.contains(&ball.sample(&mut rng, 1.0)));
        }
        let inf = BallSpec::new(Vector::zeros(2), f64::INFINITY);
        assert!(inf.sample(&mut rng, 2.0).norm() <= 2.0);
    }
}
