//! Sufficient conditions on the constants under which the convergence
//! guarantees apply.
//!
//! Nesterov, with `q = (1 − β)/(1 + β)`:
//!
//! ```text
//! G₁⁴      ≤ C₁ μ² / (L₂ (L₂+1)²) · q³
//! G₁² G₂²  ≤ C₂ μ³ / (L₂ (L₂+1) √κ) · q²
//! R_x      ≥ (36/c) √κ (η(L₂+1)/(1−β))^{1/2} (f₀ − f⋆)^{1/2}
//! R_u      ≥ (36/c) √κ (η G₁² L₂ (L₂+1)(1+β)³ / (μβ(1−β)³))^{1/2} (f₀ − f⋆)^{1/2}
//! ```
//!
//! Gradient descent:
//!
//! ```text
//! G₁⁴ ≤ μ² / (8 L₂²)
//! R_x ≥ 16 η κ √L₁ (f₀ − f⋆)^{1/2}
//! R_u ≥ 16 η κ G₁ √L₂ (f₀ − f⋆)^{1/2}
//! ```
//!
//! These are strict comparisons of constants, not floating-point checks, so
//! the margin here is scale-free: `(rhs − lhs) / max(|lhs|, |rhs|)`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{CheckItem, CheckReport, CheckStatus};
use crate::objective::ObjectiveConstants;
use crate::optim::{Method, OptConfig};

const REQUIREMENT_TOLERANCE: f64 = 1e-12;

/// The absolute constants `C₁`, `C₂` of the Nesterov conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequirementConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for RequirementConstants {
    fn default() -> Self {
        RequirementConstants { c1: 1e-3, c2: 1e-3 }
    }
}

fn scale_free_margin(lhs: f64, rhs: f64) -> f64 {
    if rhs == f64::INFINITY {
        return if lhs.is_finite() { 1.0 } else { f64::NAN };
    }
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

fn item(label: &str, lhs: f64, rhs: f64) -> CheckItem {
    let margin = scale_free_margin(lhs, rhs);
    CheckItem {
        label: label.to_string(),
        lhs,
        rhs,
        margin,
        holds: margin >= -REQUIREMENT_TOLERANCE,
    }
}

/// Evaluates each step-size condition for `method`. The report
/// holds only if every item does.
pub fn check_requirements(
    constants: &ObjectiveConstants,
    cfg: &OptConfig,
    gap0: f64,
    method: Method,
    rc: RequirementConstants,
) -> CheckReport {
    let ObjectiveConstants {
        mu,
        l1,
        l2,
        g1,
        g2,
        r_x,
        r_u,
        kappa,
        ..
    } = *constants;
    let eta = cfg.eta;
    let c = cfg.c;
    let sgap = gap0.max(0.0).sqrt();
    let items: Vec<CheckItem> = match method {
        Method::Nesterov => {
            let b = cfg.beta;
            let q = (1.0 - b) / (1.0 + b);
            let sk = kappa.sqrt();
            let ru_inner = if g1 == 0.0 {
                0.0
            } else {
                eta * g1 * g1 * l2 * (l2 + 1.0) * (1.0 + b).powi(3) / (mu * b * (1.0 - b).powi(3))
            };
            alloc::vec![
                item("G1^4 <= C1 mu^2 / (L2 (L2+1)^2) q^3", g1.powi(4), rc.c1 * mu * mu / (l2 * (l2 + 1.0).powi(2)) * q.powi(3)),
                item(
                    "G1^2 G2^2 <= C2 mu^3 / (L2 (L2+1) sqrt(kappa)) q^2",
                    g1 * g1 * g2 * g2,
                    rc.c2 * mu.powi(3) / (l2 * (l2 + 1.0) * sk) * q * q,
                ),
                item(
                    "R_x >= (36/c) sqrt(kappa) (eta (L2+1)/(1-beta))^(1/2) gap0^(1/2)",
                    36.0 / c * sk * (eta * (l2 + 1.0) / (1.0 - b)).sqrt() * sgap,
                    r_x,
                ),
                item(
                    "R_u >= (36/c) sqrt(kappa) (eta G1^2 L2 (L2+1)(1+beta)^3 / (mu beta (1-beta)^3))^(1/2) gap0^(1/2)",
                    36.0 / c * sk * ru_inner.sqrt() * sgap,
                    r_u,
                ),
            ]
        }
        Method::Gd => alloc::vec![
            item(
                "G1^4 <= mu^2 / (8 L2^2)",
                g1.powi(4),
                mu * mu / (8.0 * l2 * l2)
            ),
            item(
                "R_x >= 16 eta kappa sqrt(L1) gap0^(1/2)",
                16.0 * eta * kappa * l1.sqrt() * sgap,
                r_x
            ),
            item(
                "R_u >= 16 eta kappa G1 sqrt(L2) gap0^(1/2)",
                16.0 * eta * kappa * g1 * l2.sqrt() * sgap,
                r_u
            ),
        ],
    };
    let (worst_iteration, worst) =
        items
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, it)| {
                if it.margin < acc.1 || it.margin.is_nan() {
                    (i, it.margin)
                } else {
                    acc
                }
            });
    let all = items.iter().all(|it| it.holds);
    let details: String = items
        .iter()
        .filter(|it| !it.holds)
        .map(|it| {
            alloc::format!(
                "violated: {} (lhs={:e}, rhs={:e})",
                it.label,
                it.lhs,
                it.rhs
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    CheckReport {
        name: alloc::format!("requirements_{}", method.name()),
        status: if all {
            CheckStatus::Holds
        } else {
            CheckStatus::Violated
        },
        worst_margin: worst,
        worst_iteration,
        evaluated: items.len(),
        tolerance: REQUIREMENT_TOLERANCE,
        details: if details.is_empty() {
            "all requirements satisfied".to_string()
        } else {
            details
        },
        items,
    }
}
