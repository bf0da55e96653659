//! Pointwise and trajectory checks of the convergence inequalities.
//!
//! Every check compares a left-hand side against a right-hand side that
//! should dominate it and reports the worst relative margin
//! `(rhs − lhs) / (1 + |lhs| + |rhs|)`. A check is violated when that margin
//! drops below `−tolerance`.

mod lyapunov;
mod rate;
mod requirements;

pub use lyapunov::{
    check_displacements, check_gradient_norm_bound, check_lyapunov_decay, check_lyapunov_envelope,
    check_phi0_bound, lyapunov_trace, LyapunovParams, LyapunovRecord, Q1Form,
};
pub use rate::{rate_fit, rate_fit_tail, RateFit};
pub use requirements::{check_requirements, RequirementConstants};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg::Vector;
use crate::objective::{ObjectiveError, PartitionedObjective};
use crate::optim::IterTrace;

/// Default relative tolerance of every check.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagError {
    #[error("objective provides no inner minimizer")]
    NoInnerMinimizer,
    #[error("trace does not carry iterates at every step")]
    MissingIterates,
    #[error("the Lyapunov potential needs momentum 0 < beta < 1, got {0}")]
    NeedsMomentum(f64),
    #[error("rate fit needs at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CheckStatus {
    Holds,
    Violated,
    NotApplicable,
}

/// One labelled inequality inside a report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckItem {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub worst_margin: f64,
    /// Index of the iteration or sample attaining `worst_margin`.
    pub worst_iteration: usize,
    pub evaluated: usize,
    pub tolerance: f64,
    pub details: String,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn not_applicable(name: &str, details: &str) -> Self {
        CheckReport {
            name: name.to_string(),
            status: CheckStatus::NotApplicable,
            worst_margin: f64::NAN,
            worst_iteration: 0,
            evaluated: 0,
            tolerance: DEFAULT_TOLERANCE,
            details: details.to_string(),
            items: Vec::new(),
        }
    }

    pub fn holds(&self) -> bool {
        self.status == CheckStatus::Holds
    }

    pub fn violated(&self) -> bool {
        self.status == CheckStatus::Violated
    }
}

/// `(rhs − lhs) / (1 + |lhs| + |rhs|)`, with `+∞` on the right treated as
/// always satisfied.
pub fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    if rhs == f64::INFINITY && lhs.is_finite() {
        return 1.0;
    }
    if lhs == f64::INFINITY && rhs.is_finite() {
        return -1.0;
    }
    (rhs - lhs) / (1.0 + lhs.abs() + rhs.abs())
}

/// Tracks the worst margin over a family of inequalities `lhs ≤ rhs`.
#[derive(Debug, Clone)]
pub struct MarginTracker {
    name: String,
    tolerance: f64,
    worst: f64,
    worst_index: usize,
    worst_sides: (f64, f64),
    evaluated: usize,
    non_finite: usize,
}

impl MarginTracker {
    pub fn new(name: &str, tolerance: f64) -> Self {
        MarginTracker {
            name: name.to_string(),
            tolerance,
            worst: f64::INFINITY,
            worst_index: 0,
            worst_sides: (f64::NAN, f64::NAN),
            evaluated: 0,
            non_finite: 0,
        }
    }

    pub fn observe(&mut self, index: usize, lhs: f64, rhs: f64) {
        self.evaluated += 1;
        let m = relative_margin(lhs, rhs);
        if m.is_nan() {
            self.non_finite += 1;
            return;
        }
        if m < self.worst {
            self.worst = m;
            self.worst_index = index;
            self.worst_sides = (lhs, rhs);
        }
    }

    pub fn finish(self) -> CheckReport {
        if self.evaluated == 0 {
            return CheckReport::not_applicable(&self.name, "no points evaluated");
        }
        let violated = self.worst < -self.tolerance || self.non_finite > 0;
        let mut details = format!(
            "worst at index {}: lhs={:e}, rhs={:e}",
            self.worst_index, self.worst_sides.0, self.worst_sides.1
        );
        if self.non_finite > 0 {
            details.push_str(&format!("; {} non-finite evaluations", self.non_finite));
        }
        CheckReport {
            name: self.name,
            status: if violated {
                CheckStatus::Violated
            } else {
                CheckStatus::Holds
            },
            worst_margin: if self.non_finite > 0 {
                f64::NAN
            } else {
                self.worst
            },
            worst_iteration: self.worst_index,
            evaluated: self.evaluated,
            tolerance: self.tolerance,
            details,
            items: Vec::new(),
        }
    }
}

/// `‖∇₁f‖² ≥ 2μ (f − f⋆)`.
pub fn check_pl<O: PartitionedObjective + ?Sized>(
    obj: &O,
    points: &[(Vector, Vector)],
) -> CheckReport {
    let c = obj.constants();
    let mut t = MarginTracker::new("pl", DEFAULT_TOLERANCE);
    for (i, (x, u)) in points.iter().enumerate() {
        let gap = obj.eval(x, u) - c.f_star;
        let g1 = obj.grad1(x, u).norm_sq();
        t.observe(i, 2.0 * c.mu * gap, g1);
    }
    t.finish()
}

/// `‖∇₂f‖² ≤ (G₁² L₂ / μ) ‖∇₁f‖²`.
pub fn check_grad_dominance<O: PartitionedObjective + ?Sized>(
    obj: &O,
    points: &[(Vector, Vector)],
) -> CheckReport {
    let c = obj.constants();
    let factor = c.g1 * c.g1 * c.l2 / c.mu;
    let mut t = MarginTracker::new("grad_dominance", DEFAULT_TOLERANCE);
    for (i, (x, u)) in points.iter().enumerate() {
        let (g1, g2) = obj.grads(x, u);
        t.observe(i, g2.norm_sq(), factor * g1.norm_sq());
    }
    t.finish()
}

/// A sample for [`check_fgap_u_change`].
#[derive(Debug, Clone, PartialEq)]
pub struct FgapSample {
    pub x: Vector,
    pub u: Vector,
    pub v: Vector,
    pub qhat: f64,
}

/// `f(x,u) − f(x,v) ≤ Q̂⁻¹ L₂ (f(x,v) − f⋆) + (G₁²/2)(L₂ + Q̂) ‖u − v‖²`.
pub fn check_fgap_u_change<O: PartitionedObjective + ?Sized>(
    obj: &O,
    samples: &[FgapSample],
) -> CheckReport {
    let c = obj.constants();
    let mut t = MarginTracker::new("fgap_u_change", DEFAULT_TOLERANCE);
    for (i, s) in samples.iter().enumerate() {
        assert!(s.qhat > 0.0, "check_fgap_u_change: qhat must be positive");
        let fu = obj.eval(&s.x, &s.u);
        let fv = obj.eval(&s.x, &s.v);
        let rhs = c.l2 / s.qhat * (fv - c.f_star)
            + 0.5 * c.g1 * c.g1 * (c.l2 + s.qhat) * s.u.dist(&s.v).powi(2);
        t.observe(i, fu - fv, rhs);
    }
    t.finish()
}

/// `‖x⋆(u₁) − x⋆(u₂)‖ ≤ (G₂/μ) ‖u₁ − u₂‖`.
pub fn check_minimizer_lipschitz<O: PartitionedObjective + ?Sized>(
    obj: &O,
    pairs: &[(Vector, Vector)],
) -> CheckReport {
    const NAME: &str = "minimizer_lipschitz";
    if !obj.has_inner_argmin() {
        return CheckReport::not_applicable(NAME, "objective provides no inner minimizer");
    }
    let c = obj.constants();
    let mut t = MarginTracker::new(NAME, DEFAULT_TOLERANCE);
    for (i, (u1, u2)) in pairs.iter().enumerate() {
        match (obj.inner_argmin(u1), obj.inner_argmin(u2)) {
            (Ok(a), Ok(b)) => t.observe(i, a.dist(&b), c.g2 / c.mu * u1.dist(u2)),
            _ => t.observe(i, f64::NAN, f64::NAN),
        }
    }
    t.finish()
}

/// `‖∇₁f‖² ≤ 2L₁ (f − f⋆)` and `‖∇₂f‖² ≤ 2G₁²L₂ (f − f⋆)`, merged into one
/// report. The index of a violation is `2·i` for the first bound and
/// `2·i + 1` for the second.
pub fn check_aux_bounds<O: PartitionedObjective + ?Sized>(
    obj: &O,
    points: &[(Vector, Vector)],
) -> CheckReport {
    let c = obj.constants();
    let mut t1 = MarginTracker::new("aux_grad1_bound", DEFAULT_TOLERANCE);
    let mut t2 = MarginTracker::new("aux_grad2_bound", DEFAULT_TOLERANCE);
    let mut both = MarginTracker::new("aux_bounds", DEFAULT_TOLERANCE);
    for (i, (x, u)) in points.iter().enumerate() {
        let gap = obj.eval(x, u) - c.f_star;
        let (g1, g2) = obj.grads(x, u);
        let (l1, r1) = (g1.norm_sq(), 2.0 * c.l1 * gap);
        let (l2, r2) = (g2.norm_sq(), 2.0 * c.g1 * c.g1 * c.l2 * gap);
        t1.observe(i, l1, r1);
        t2.observe(i, l2, r2);
        both.observe(2 * i, l1, r1);
        both.observe(2 * i + 1, l2, r2);
    }
    let mut report = both.finish();
    let (a, b) = (t1.finish(), t2.finish());
    report.items = [a, b]
        .into_iter()
        .map(|r| CheckItem {
            label: r.name,
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: r.worst_margin,
            holds: r.status != CheckStatus::Violated,
        })
        .collect();
    report
}

/// The stored `(x_k, u_k)` of a trace.
pub fn trajectory_points(trace: &IterTrace) -> Vec<(Vector, Vector)> {
    trace
        .records
        .iter()
        .filter_map(|r| r.point.as_ref().map(|p| (p.x.clone(), p.u.clone())))
        .collect()
}

/// Merges several reports into one status: violated if any is violated,
/// not applicable if all are.
pub fn overall_status(reports: &[CheckReport]) -> CheckStatus {
    if reports.iter().any(|r| r.status == CheckStatus::Violated) {
        CheckStatus::Violated
    } else if reports
        .iter()
        .all(|r| r.status == CheckStatus::NotApplicable)
    {
        CheckStatus::NotApplicable
    } else {
        CheckStatus::Holds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::objective::{embed_strongly_convex, ObjectiveConstants};
    use alloc::vec;

    /// `½ μ ‖x‖²` with a dummy one-dimensional `u`.
    struct ScaledSquare(f64);
    impl PartitionedObjective for ScaledSquare {
        fn dims(&self) -> (usize, usize) {
            (2, 1)
        }
        fn eval(&self, x: &Vector, _u: &Vector) -> f64 {
            0.5 * self.0 * x.norm_sq()
        }
        fn grad1(&self, x: &Vector, _u: &Vector) -> Vector {
            x.scale(self.0)
        }
        fn grad2(&self, _x: &Vector, _u: &Vector) -> Vector {
            Vector::zeros(1)
        }
        fn constants(&self) -> ObjectiveConstants {
            ObjectiveConstants::new(
                self.0,
                self.0,
                1.0,
                0.0,
                0.0,
                f64::INFINITY,
                f64::INFINITY,
                0.0,
            )
            .unwrap()
        }
    }

    fn points() -> Vec<(Vector, Vector)> {
        (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                (
                    Vector::new(vec![t.sin() * 3.0, t.cos()]),
                    Vector::new(vec![t]),
                )
            })
            .collect()
    }

    #[test]
    fn pl_is_tight_on_isotropic_quadratic() {
        let obj = ScaledSquare(2.5);
        let r = check_pl(&obj, &points());
        assert!(r.holds());
        assert!(r.worst_margin.abs() < 1e-14);
        for (x, u) in points() {
            let gap = obj.eval(&x, &u);
            if gap > 0.0 {
                let ratio = obj.grad1(&x, &u).norm_sq() / (2.0 * 2.5 * gap);
                assert!((ratio - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn aux_bounds_are_tight_on_isotropic_quadratic() {
        let r = check_aux_bounds(&ScaledSquare(4.0), &points());
        assert!(r.holds());
        assert!(r.worst_margin.abs() < 1e-14);
        let zero = [(Vector::zeros(2), Vector::zeros(1))];
        let r0 = check_aux_bounds(&ScaledSquare(4.0), &zero);
        assert_eq!(r0.worst_margin, 0.0);
    }

    #[test]
    fn embedding_checks_hold() {
        let q =
            embed_strongly_convex(Matrix::diag(&[1.0, 10.0]), Vector::new(vec![1.0, 2.0])).unwrap();
        let pts: Vec<_> = points()
            .into_iter()
            .map(|(x, _)| (x, Vector::zeros(0)))
            .collect();
        assert!(check_pl(&q, &pts).holds());
        let gd = check_grad_dominance(&q, &pts);
        assert!(gd.holds());
        assert_eq!(gd.worst_margin, 0.0);
        let pairs = [(Vector::zeros(0), Vector::zeros(0))];
        let ml = check_minimizer_lipschitz(&q, &pairs);
        assert!(ml.holds() && ml.worst_margin >= 0.0);
    }

    #[test]
    fn lipschitz_without_argmin_is_not_applicable() {
        let r =
            check_minimizer_lipschitz(&ScaledSquare(1.0), &[(Vector::zeros(1), Vector::zeros(1))]);
        assert_eq!(r.status, CheckStatus::NotApplicable);
    }

    #[test]
    fn fgap_with_equal_u_holds() {
        let samples: Vec<FgapSample> = points()
            .into_iter()
            .map(|(x, u)| FgapSample {
                x,
                u: u.clone(),
                v: u,
                qhat: 0.5,
            })
            .collect();
        assert!(check_fgap_u_change(&ScaledSquare(1.0), &samples).holds());
    }

    #[test]
    fn violation_is_detected_and_located() {
        let mut t = MarginTracker::new("t", 1e-8);
        t.observe(0, 1.0, 2.0);
        t.observe(1, 3.0, 1.0);
        t.observe(2, 0.0, 0.0);
        let r = t.finish();
        assert!(r.violated());
        assert_eq!(r.worst_iteration, 1);
        assert!((r.worst_margin + 0.4).abs() < 1e-15);
    }

    #[test]
    fn slack_absorbs_rounding() {
        let mut t = MarginTracker::new("t", 1e-8);
        t.observe(0, 1.0 + 1e-12, 1.0);
        assert!(t.finish().holds());
    }

    #[test]
    fn infinite_rhs_is_satisfied() {
        assert_eq!(relative_margin(5.0, f64::INFINITY), 1.0);
        assert_eq!(relative_margin(f64::INFINITY, 5.0), -1.0);
    }
}
