//! The potential behind Nesterov's accelerated rate on partitioned objectives:
//!
//! ```text
//! φ_k = f(x_k, u_k) − f⋆ + Q₁ ‖z_k − x⋆_{k−1}‖² + (η/8) ‖∇₁f(y_{k−1}, v_{k−1})‖²
//! x⋆_k = argmin_x f(x, v_k)
//! z_k  = ((1 − βλ)/(βλ)) (y_k − x_k) + y_k
//! γ = c/(2√κ − c),  λ = (1 + γ)³ − 1,  Q₁ = λ² / (2η (1 + γ)⁵)
//! ```
//!
//! with `(y_{−1}, v_{−1}) = (y_0, v_0)`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{CheckReport, DiagError, MarginTracker, DEFAULT_TOLERANCE};
use crate::linalg::Vector;
use crate::objective::{ObjectiveConstants, PartitionedObjective};
use crate::optim::IterTrace;

/// Power of `(1 + γ)` in the denominator of `Q₁`. The fifth power is the
/// default; the square is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Q1Form {
    #[default]
    FifthPower,
    SquarePower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParams {
    pub c: f64,
    pub kappa: f64,
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub q1: f64,
    pub form: Q1Form,
}

impl LyapunovParams {
    pub fn new(c: f64, kappa: f64, eta: f64, beta: f64, form: Q1Form) -> Result<Self, DiagError> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(DiagError::NeedsMomentum(beta));
        }
        let sk = kappa.sqrt();
        let gamma = c / (2.0 * sk - c);
        let lambda = (1.0 + gamma).powi(3) - 1.0;
        let power = match form {
            Q1Form::FifthPower => 5,
            Q1Form::SquarePower => 2,
        };
        let q1 = lambda * lambda / (2.0 * eta * (1.0 + gamma).powi(power));
        Ok(LyapunovParams {
            c,
            kappa,
            eta,
            beta,
            gamma,
            lambda,
            q1,
            form,
        })
    }

    /// The envelope contraction `1 − c/(4√κ)`.
    pub fn rho(&self) -> f64 {
        1.0 - self.c / (4.0 * self.kappa.sqrt())
    }

    /// `Q₂ = 6η(L₂ + 1)/(1 − β)`.
    pub fn q2(&self, l2: f64) -> f64 {
        6.0 * self.eta * (l2 + 1.0) / (1.0 - self.beta)
    }

    /// `Q₃ = 6ηL₂(L₂ + 1)(1 + β)³ / (μβ(1 − β)³)`.
    pub fn q3(&self, l2: f64, mu: f64) -> f64 {
        let b = self.beta;
        6.0 * self.eta * l2 * (l2 + 1.0) * (1.0 + b).powi(3) / (mu * b * (1.0 - b).powi(3))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovRecord {
    pub k: usize,
    pub z: Vector,
    pub xstar_prev: Vector,
    pub phi: f64,
    pub gap_term: f64,
    pub z_term: f64,
    pub grad_term: f64,
}

/// Evaluates `φ_k` along a Nesterov trace that stores every iterate.
pub fn lyapunov_trace<O: PartitionedObjective + ?Sized>(
    obj: &O,
    trace: &IterTrace,
    params: &LyapunovParams,
) -> Result<Vec<LyapunovRecord>, DiagError> {
    if !obj.has_inner_argmin() {
        return Err(DiagError::NoInnerMinimizer);
    }
    if !trace.has_all_points() {
        return Err(DiagError::MissingIterates);
    }
    let bl = params.beta * params.lambda;
    let zcoef = (1.0 - bl) / bl;
    let mut out = Vec::with_capacity(trace.len());
    let mut xstar_prev = None::<Vector>;
    for (i, rec) in trace.records.iter().enumerate() {
        let p = rec.point.as_ref().expect("checked above");
        let prev = if i == 0 { 0 } else { i - 1 };
        let xs = match (i, &xstar_prev) {
            (0, _) | (_, None) => {
                obj.inner_argmin(&trace.records[prev].point.as_ref().unwrap().v)?
            }
            (_, Some(xs)) => xs.clone(),
        };
        let mut z = p.y.sub(&p.x).scale(zcoef);
        z.axpy(1.0, &p.y);
        let z_term = params.q1 * z.dist(&xs).powi(2);
        let g = trace.records[prev].grad1_norm;
        let grad_term = params.eta / 8.0 * g * g;
        let gap_term = rec.gap;
        out.push(LyapunovRecord {
            k: rec.k,
            z,
            xstar_prev: xs,
            phi: gap_term + z_term + grad_term,
            gap_term,
            z_term,
            grad_term,
        });
        // x⋆_k depends on v_k and becomes x⋆_{(k+1)−1} for the next record.
        xstar_prev = Some(obj.inner_argmin(&p.v)?);
    }
    Ok(out)
}

/// `(1 − c/(2√κ))⁻¹ φ_{k+1} − φ_k ≤ (c/(4√κ)) (1 − c/(4√κ))^k φ_0`.
pub fn check_lyapunov_decay(records: &[LyapunovRecord], params: &LyapunovParams) -> CheckReport {
    let mut t = MarginTracker::new("lyapunov_decay", DEFAULT_TOLERANCE);
    let Some(first) = records.first() else {
        return t.finish();
    };
    let phi0 = first.phi;
    let sk = params.kappa.sqrt();
    let shrink = 1.0 - params.c / (2.0 * sk);
    let coef = params.c / (4.0 * sk);
    let rho = params.rho();
    for w in records.windows(2) {
        let k = w[0].k;
        let lhs = w[1].phi / shrink - w[0].phi;
        let rhs = coef * rho.powi(k as i32) * phi0;
        t.observe(k, lhs, rhs);
    }
    t.finish()
}

/// `φ_k ≤ (1 − c/(4√κ))^k φ_0`.
pub fn check_lyapunov_envelope(records: &[LyapunovRecord], params: &LyapunovParams) -> CheckReport {
    let mut t = MarginTracker::new("lyapunov_envelope", DEFAULT_TOLERANCE);
    if let Some(first) = records.first() {
        let rho = params.rho();
        for r in records {
            t.observe(r.k, r.phi, rho.powi(r.k as i32) * first.phi);
        }
    }
    t.finish()
}

/// `φ_0 ≤ 2 (f(x_0, u_0) − f⋆)`.
pub fn check_phi0_bound(records: &[LyapunovRecord]) -> CheckReport {
    let mut t = MarginTracker::new("phi0_bound", DEFAULT_TOLERANCE);
    if let Some(first) = records.first() {
        t.observe(0, first.phi, 2.0 * first.gap_term);
    }
    t.finish()
}

/// `‖x_k − x_{k−1}‖² ≤ Q₂ ρ^k φ_0` and `‖u_k − u_{k−1}‖² ≤ G₁² Q₃ ρ^k φ_0`
/// with `ρ = 1 − c/(4√κ)`.
pub fn check_displacements(
    trace: &IterTrace,
    phi0: f64,
    params: &LyapunovParams,
    constants: &ObjectiveConstants,
) -> (CheckReport, CheckReport) {
    let mut tx = MarginTracker::new("displacement_x", DEFAULT_TOLERANCE);
    let mut tu = MarginTracker::new("displacement_u", DEFAULT_TOLERANCE);
    let q2 = params.q2(constants.l2);
    let q3 = constants.g1 * constants.g1 * params.q3(constants.l2, constants.mu);
    let rho = params.rho();
    for r in &trace.records {
        let env = rho.powi(r.k as i32) * phi0;
        tx.observe(r.k, r.dx * r.dx, q2 * env);
        tu.observe(r.k, r.du * r.du, q3 * env);
    }
    (tx.finish(), tu.finish())
}

/// `η ‖∇₁f(y_k, v_k)‖ ≤ β ‖x_k − x_{k−1}‖ + ‖x_{k+1} − x_k‖`.
pub fn check_gradient_norm_bound(trace: &IterTrace) -> CheckReport {
    let mut t = MarginTracker::new("gradient_norm_bound", DEFAULT_TOLERANCE);
    for w in trace.records.windows(2) {
        t.observe(
            w[0].k,
            trace.eta * w[0].grad1_norm,
            trace.beta * w[0].dx + w[1].dx,
        );
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::objective::embed_strongly_convex;
    use crate::optim::{derive_hyperparams, run_nesterov, Method};
    use alloc::vec;

    fn params(kappa: f64) -> LyapunovParams {
        let c = 1.0 / 64.0;
        let beta = crate::optim::nesterov_beta(kappa, c);
        LyapunovParams::new(c, kappa, c, beta, Q1Form::FifthPower).unwrap()
    }

    #[test]
    fn parameter_identities() {
        let p = params(100.0);
        assert!(p.gamma > 0.0 && p.gamma <= 1.0);
        assert!(p.lambda > 0.0 && p.lambda <= 7.0 * p.gamma);
        let sq = LyapunovParams::new(p.c, p.kappa, p.eta, p.beta, Q1Form::SquarePower).unwrap();
        assert!((sq.q1 / p.q1 - (1.0 + p.gamma).powi(3)).abs() < 1e-12);
        assert!(LyapunovParams::new(p.c, p.kappa, p.eta, 0.0, Q1Form::FifthPower).is_err());
    }

    #[test]
    fn converged_potential_passes() {
        let recs: Vec<LyapunovRecord> = (0..10)
            .map(|k| LyapunovRecord {
                k,
                z: Vector::zeros(1),
                xstar_prev: Vector::zeros(1),
                phi: 0.0,
                gap_term: 0.0,
                z_term: 0.0,
                grad_term: 0.0,
            })
            .collect();
        let p = params(4.0);
        let r = check_lyapunov_decay(&recs, &p);
        assert!(r.holds() && r.worst_margin >= 0.0);
        assert!(check_lyapunov_envelope(&recs, &p).holds());
    }

    #[test]
    fn quadratic_run_satisfies_every_bound() {
        let obj = embed_strongly_convex(
            Matrix::diag(&[1.0, 3.0, 25.0]),
            Vector::new(vec![1.0, -2.0, 0.5]),
        )
        .unwrap();
        let c = obj.constants();
        let cfg = derive_hyperparams(&c, 1.0 / 64.0, Method::Nesterov)
            .with_max_iters(800)
            .without_early_stop()
            .with_store_every(1);
        let x0 = Vector::new(vec![3.0, 3.0, 3.0]);
        let tr = run_nesterov(&obj, &x0, &Vector::zeros(0), &cfg).unwrap();
        let p = LyapunovParams::new(cfg.c, c.kappa, cfg.eta, cfg.beta, Q1Form::FifthPower).unwrap();
        let recs = lyapunov_trace(&obj, &tr, &p).unwrap();
        assert_eq!(recs.len(), tr.len());
        assert!(recs
            .iter()
            .zip(&tr.records)
            .all(|(r, t)| r.gap_term == t.gap));
        assert!(recs.iter().all(|r| r.phi >= r.gap_term));
        assert_eq!(recs[0].z, x0);
        assert!(check_phi0_bound(&recs).holds());
        assert!(check_lyapunov_envelope(&recs, &p).holds());
        assert!(check_lyapunov_decay(&recs, &p).holds());
        let (dx, du) = check_displacements(&tr, recs[0].phi, &p, &c);
        assert!(dx.holds() && du.holds());
        assert!(check_gradient_norm_bound(&tr).holds());
    }

    #[test]
    fn trace_without_iterates_is_rejected() {
        let obj = embed_strongly_convex(Matrix::identity(2), Vector::zeros(2)).unwrap();
        let cfg = derive_hyperparams(&obj.constants(), 0.5, Method::Nesterov).with_max_iters(5);
        let tr = run_nesterov(&obj, &Vector::new(vec![1.0, 1.0]), &Vector::zeros(0), &cfg).unwrap();
        let p = LyapunovParams::new(0.5, 1.0, cfg.eta, cfg.beta, Q1Form::FifthPower).unwrap();
        assert_eq!(
            lyapunov_trace(&obj, &tr, &p),
            Err(DiagError::MissingIterates)
        );
    }
}
