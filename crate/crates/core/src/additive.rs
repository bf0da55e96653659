//! The additive model `f(x, u) = ½ ‖A₁x + σ(A₂u) − b‖²` with square, invertible
//! `A₁ ∈ ℝ^{m×m}`, `A₂ ∈ ℝ^{m×d}` and a 1-Lipschitz activation `σ`.
//!
//! Its constants are `μ = σ_min(A₁)²`, `L₁ = σ_max(A₁)²`, `L₂ = 1`,
//! `G₁ = B σ_max(A₂)`, `G₂ = B σ_max(A₁) σ_max(A₂)` with infinite radii and
//! `f⋆ = 0`, attained at `x⋆(u) = A₁⁻¹ (b − σ(A₂u))`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::diagnostics::{CheckReport, CheckStatus, RequirementConstants};
use crate::linalg::{
    gaussian_matrix, gaussian_vector, random_orthogonal, svd, LinalgError, Matrix, Qr, Rng, Vector,
};
use crate::objective::{ObjectiveConstants, ObjectiveError, PartitionedObjective};
use crate::optim::nesterov_beta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative, with the ReLU subgradient at 0 taken as 0.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    /// Lipschitz constant `B`.
    pub fn lipschitz(self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdditiveInstance {
    pub a1: Matrix,
    pub a2: Matrix,
    pub b: Vector,
    pub activation: Activation,
    pub lip_b: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: Option<u64>,
}

impl AdditiveInstance {
    pub fn new(a1: Matrix, a2: Matrix, b: Vector, activation: Activation) -> Self {
        AdditiveInstance {
            a1,
            a2,
            b,
            activation,
            lip_b: activation.lipschitz(),
            seed: None,
        }
    }
}

/// An [`AdditiveInstance`] with its factorization and constants.
#[derive(Debug, Clone)]
pub struct AdditiveModel {
    inst: AdditiveInstance,
    qr: Qr,
    sigma_a1: (f64, f64),
    sigma_max_a2: f64,
    constants: ObjectiveConstants,
}

impl AdditiveModel {
    pub fn new(inst: AdditiveInstance) -> Result<Self, ObjectiveError> {
        let m = inst.a1.rows();
        if inst.a1.cols() != m || inst.a2.rows() != m || inst.b.dim() != m {
            return Err(LinalgError::DimensionMismatch {
                op: "additive model",
                left: inst.a1.shape(),
                right: inst.a2.shape(),
            }
            .into());
        }
        let s1 = svd(&inst.a1)?;
        let (smax, smin) = (s1.sigma_max(), s1.sigma_min());
        if !(smin > 0.0) {
            return Err(LinalgError::Singular.into());
        }
        let sa2 = if inst.a2.cols() == 0 {
            0.0
        } else {
            svd(&inst.a2)?.sigma_max()
        };
        let bl = inst.lip_b;
        let constants = ObjectiveConstants::new(
            smin * smin,
            smax * smax,
            1.0,
            bl * sa2,
            bl * smax * sa2,
            f64::INFINITY,
            f64::INFINITY,
            0.0,
        )?;
        let qr = Qr::new(&inst.a1)?;
        Ok(AdditiveModel {
            inst,
            qr,
            sigma_a1: (smin, smax),
            sigma_max_a2: sa2,
            constants,
        })
    }

    pub fn instance(&self) -> &AdditiveInstance {
        &self.inst
    }

    pub fn sigma_min_a1(&self) -> f64 {
        self.sigma_a1.0
    }

    pub fn sigma_max_a1(&self) -> f64 {
        self.sigma_a1.1
    }

    pub fn sigma_max_a2(&self) -> f64 {
        self.sigma_max_a2
    }

    fn preactivation(&self, u: &Vector) -> Vector {
        self.inst.a2.mul_vec(u)
    }

    fn residual(&self, x: &Vector, z: &Vector) -> Vector {
        let act = self.inst.activation;
        let mut r = self.inst.a1.mul_vec(x);
        for i in 0..r.dim() {
            r[i] += act.apply(z[i]) - self.inst.b[i];
        }
        r
    }

    /// `(f, ∇₁f, ∇₂f)` in one pass.
    pub fn eval_grads(&self, x: &Vector, u: &Vector) -> (f64, Vector, Vector) {
        let z = self.preactivation(u);
        let r = self.residual(x, &z);
        let g1 = self.inst.a1.tr_mul_vec(&r);
        let act = self.inst.activation;
        let w = Vector::new((0..r.dim()).map(|i| act.derivative(z[i]) * r[i]).collect());
        let g2 = self.inst.a2.tr_mul_vec(&w);
        (0.5 * r.norm_sq(), g1, g2)
    }
}

impl PartitionedObjective for AdditiveModel {
    fn dims(&self) -> (usize, usize) {
        (self.inst.a1.cols(), self.inst.a2.cols())
    }

    fn eval(&self, x: &Vector, u: &Vector) -> f64 {
        0.5 * self.residual(x, &self.preactivation(u)).norm_sq()
    }

    fn grad1(&self, x: &Vector, u: &Vector) -> Vector {
        self.eval_grads(x, u).1
    }

    fn grad2(&self, x: &Vector, u: &Vector) -> Vector {
        self.eval_grads(x, u).2
    }

    fn grads(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        let (_, g1, g2) = self.eval_grads(x, u);
        (g1, g2)
    }

    fn inner_argmin(&self, u: &Vector) -> Result<Vector, ObjectiveError> {
        let act = self.inst.activation;
        let s = self.preactivation(u).map(|z| act.apply(z));
        let rhs = self.inst.b.sub(&s);
        let x = self.qr.solve(&rhs)?;
        let f = self.eval(&x, u);
        let tolerance = 1e-18 * (1.0 + self.inst.b.norm_sq() + s.norm_sq());
        if !(f <= tolerance) {
            return Err(ObjectiveError::InnerSolveInaccurate {
                residual: f,
                tolerance,
            });
        }
        Ok(x)
    }

    fn has_inner_argmin(&self) -> bool {
        true
    }

    fn constants(&self) -> ObjectiveConstants {
        self.constants
    }
}

/// Parameters of a random instance with a controlled spectrum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdditiveGenSpec {
    pub m: usize,
    pub d: usize,
    pub sigma_min_a1: f64,
    pub sigma_max_a1: f64,
    pub sigma_max_a2: f64,
    pub b_scale: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl AdditiveGenSpec {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let ok = self.m >= 1
            && self.sigma_min_a1 > 0.0
            && self.sigma_min_a1 <= self.sigma_max_a1
            && self.sigma_max_a1.is_finite()
            && self.sigma_max_a2 >= 0.0
            && self.sigma_max_a2.is_finite()
            && self.b_scale >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ObjectiveError::InvalidConstants(alloc::format!(
                "invalid additive generator spec {self:?}"
            )))
        }
    }
}

/// Draws `A₁ = U diag(s) Vᵀ` with `s` spanning `[sigma_min_a1, sigma_max_a1]`
/// (interior values log-uniform), `A₂` Gaussian rescaled to the requested
/// spectral norm, and `b = A₁x♮ + σ(A₂u♮)` for planted Gaussian `x♮, u♮` of
/// standard deviation `b_scale`.
///
/// Draw order is fixed and does not depend on `sigma_max_a2`, so two specs
/// differing only there share `A₁`, the direction of `A₂`, and the planted
/// point.
pub fn generate_additive(spec: &AdditiveGenSpec) -> Result<AdditiveInstance, ObjectiveError> {
    spec.validate()?;
    let (m, d) = (spec.m, spec.d);
    let mut rng = Rng::new(spec.seed);
    let u = random_orthogonal(&mut rng, m)?;
    let v = random_orthogonal(&mut rng, m)?;
    let (lo, hi) = (spec.sigma_min_a1.ln(), spec.sigma_max_a1.ln());
    let mut s: Vec<f64> = (0..m).map(|_| rng.uniform_range(lo, hi).exp()).collect();
    s[0] = spec.sigma_max_a1;
    if m > 1 {
        s[m - 1] = spec.sigma_min_a1;
    }
    s.sort_by(|a, b| b.total_cmp(a));
    let us = Matrix::from_fn(m, m, |i, j| u[(i, j)] * s[j]);
    let a1 = crate::linalg::matmul_tr(&us, &v)?;
    let g = gaussian_matrix(&mut rng, m, d, 1.0);
    let x_nat = gaussian_vector(&mut rng, m, spec.b_scale);
    let u_nat = gaussian_vector(&mut rng, d, spec.b_scale);
    let gnorm = if d == 0 { 0.0 } else { svd(&g)?.sigma_max() };
    let a2 = if spec.sigma_max_a2 == 0.0 || gnorm == 0.0 {
        Matrix::zeros(m, d)
    } else {
        g.scale(spec.sigma_max_a2 / gnorm)
    };
    let act = spec.activation;
    let b = a1
        .mul_vec(&x_nat)
        .add(&a2.mul_vec(&u_nat).map(|z| act.apply(z)));
    let mut inst = AdditiveInstance::new(a1, a2, b, act);
    inst.seed = Some(spec.seed);
    Ok(inst)
}

/// `σ_min(A₁) ≥ C̃ σ_max(A₂) B κ^{3/4}`. The margin is the absolute
/// difference of the two sides.
pub fn check_sigma_condition(model: &AdditiveModel, ctilde: f64) -> CheckReport {
    assert!(
        ctilde > 0.0,
        "check_sigma_condition: ctilde must be positive"
    );
    let kappa = model.constants.kappa;
    let lhs = ctilde * model.sigma_max_a2 * model.inst.lip_b * kappa.powf(0.75);
    let rhs = model.sigma_min_a1();
    let margin = rhs - lhs;
    CheckReport {
        name: "additive_sigma_condition".into(),
        status: if margin >= 0.0 {
            CheckStatus::Holds
        } else {
            CheckStatus::Violated
        },
        worst_margin: margin,
        worst_iteration: 0,
        evaluated: 1,
        tolerance: 0.0,
        details: alloc::format!("sigma_min(A1)={rhs:e}, ctilde*sigma_max(A2)*B*kappa^0.75={lhs:e}"),
        items: Vec::new(),
    }
}

/// Largest `σ_max(A₂)` for which the `G₁`/`G₂` conditions of both
/// convergence guarantees hold on an instance with the given `A₁` spectrum
/// (`B = 1`, `L₂ = 1`).
pub fn max_in_regime_sigma_a2(
    sigma_min_a1: f64,
    sigma_max_a1: f64,
    c: f64,
    rc: RequirementConstants,
) -> f64 {
    let mu = sigma_min_a1 * sigma_min_a1;
    let l1 = sigma_max_a1 * sigma_max_a1;
    let kappa = l1 / mu;
    let beta = nesterov_beta(kappa, c);
    let q = (1.0 - beta) / (1.0 + beta);
    // G₁ = σ, G₂ = σ_max(A₁) σ, L₂ = 1.
    let nesterov_g1 = (rc.c1 * mu * mu / 4.0 * q.powi(3)).powf(0.25);
    let nesterov_g2 = (rc.c2 * mu.powi(3) / (2.0 * kappa.sqrt() * l1) * q * q).powf(0.25);
    let gd_g1 = (mu * mu / 8.0).powf(0.25);
    nesterov_g1.min(nesterov_g2).min(gd_g1)
}
