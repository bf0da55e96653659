//! Gradient descent and Nesterov's momentum on a [`PartitionedObjective`].
//!
//! Nesterov's recursion with constant step `η` and momentum `β`:
//!
//! ```text
//! (x_{k+1}, u_{k+1}) = (y_k, v_k) − η ∇f(y_k, v_k)
//! (y_{k+1}, v_{k+1}) = (x_{k+1}, u_{k+1}) + β ((x_{k+1}, u_{k+1}) − (x_k, u_k))
//! ```
//!
//! with `(y_0, v_0) = (x_0, u_0)`. Gradient descent is the `β = 0` case.
//! Both share one engine, so a `β = 0` Nesterov run is bitwise a GD run.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg::Vector;
use crate::objective::{ObjectiveConstants, PartitionedObjective};

/// Default absolute constant `c`, below both `1/4` and `1/51`.
pub const DEFAULT_C: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Method {
    Gd,
    Nesterov,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Nesterov => "nesterov",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error("non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("diverged at iteration {iteration}: gap {gap:e} exceeds {limit:e}")]
    Diverged {
        iteration: usize,
        gap: f64,
        limit: f64,
    },
    #[error("configuration is for {configured:?}, runner expects {expected:?}")]
    WrongMethod {
        configured: Method,
        expected: Method,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("starting point has dims ({got_x}, {got_u}), objective expects ({want_x}, {want_u})")]
    DimensionMismatch {
        got_x: usize,
        got_u: usize,
        want_x: usize,
        want_u: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub method: Method,
    /// The absolute constant `c` the step size and momentum were derived from.
    pub c: f64,
    pub eta: f64,
    pub beta: f64,
    pub max_iters: usize,
    /// Stop once `gap_k <= target_gap`.
    pub target_gap: f64,
    /// Stop once `gap_k <= rel_target_gap * gap_0`.
    pub rel_target_gap: f64,
    /// Abort once `gap_k > divergence_factor * gap_0`.
    pub divergence_factor: f64,
    /// Keep `(x_k, u_k, y_k, v_k)` for every `k` divisible by this; 0 keeps none.
    pub store_every: usize,
}

impl OptConfig {
    /// A configuration with explicit `η`, `β` and no early stopping.
    pub fn fixed(method: Method, eta: f64, beta: f64, max_iters: usize) -> Self {
        OptConfig {
            method,
            c: f64::NAN,
            eta,
            beta: if method == Method::Gd { 0.0 } else { beta },
            max_iters,
            target_gap: 0.0,
            rel_target_gap: 0.0,
            divergence_factor: 1e6,
            store_every: 0,
        }
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_store_every(mut self, every: usize) -> Self {
        self.store_every = every;
        self
    }

    /// Runs the full horizon.
    pub fn without_early_stop(mut self) -> Self {
        self.target_gap = 0.0;
        self.rel_target_gap = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), OptError> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(OptError::InvalidConfig(
                "eta must be finite and nonnegative",
            ));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(OptError::InvalidConfig("beta must lie in [0, 1)"));
        }
        if self.method == Method::Gd && self.beta != 0.0 {
            return Err(OptError::InvalidConfig("gradient descent needs beta = 0"));
        }
        if !(self.target_gap >= 0.0) || !(self.rel_target_gap >= 0.0) {
            return Err(OptError::InvalidConfig(
                "stopping targets must be nonnegative",
            ));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(OptError::InvalidConfig("divergence factor must exceed 1"));
        }
        Ok(())
    }
}

/// `η = c / L₁`, and `β = (4√κ − √c)/(4√κ + 7√c)` for Nesterov (0 for GD).
///
/// Early stopping defaults to `gap ≤ 1e-12 · gap_0`; the horizon to 1000.
pub fn derive_hyperparams(constants: &ObjectiveConstants, c: f64, method: Method) -> OptConfig {
    assert!(c > 0.0, "derive_hyperparams: c must be positive");
    let eta = c / constants.l1;
    let beta = match method {
        Method::Gd => 0.0,
        Method::Nesterov => nesterov_beta(constants.kappa, c),
    };
    OptConfig {
        method,
        c,
        eta,
        beta,
        max_iters: 1000,
        target_gap: 0.0,
        rel_target_gap: 1e-12,
        divergence_factor: 1e6,
        store_every: 0,
    }
}

pub fn nesterov_beta(kappa: f64, c: f64) -> f64 {
    let sk = kappa.sqrt();
    let sc = c.sqrt();
    (4.0 * sk - sc) / (4.0 * sk + 7.0 * sc)
}

/// Predicted GD contraction `1 − c/(4κ)`.
pub fn gd_rate_bound(kappa: f64, c: f64) -> f64 {
    1.0 - c / (4.0 * kappa)
}

/// Predicted Nesterov contraction `1 − c/(4√κ)`.
pub fn nesterov_rate_bound(kappa: f64, c: f64) -> f64 {
    1.0 - c / (4.0 * kappa.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterPoint {
    pub x: Vector,
    pub u: Vector,
    pub y: Vector,
    pub v: Vector,
}

/// One row of a trace. Gradient norms are taken at the extrapolated point
/// `(y_k, v_k)`, which equals `(x_k, u_k)` for GD.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    pub f: f64,
    pub gap: f64,
    pub grad1_norm: f64,
    pub grad2_norm: f64,
    pub dx: f64,
    pub du: f64,
    pub dist_x0: f64,
    pub dist_u0: f64,
    pub point: Option<IterPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterTrace {
    pub method: Method,
    pub eta: f64,
    pub beta: f64,
    pub f_star: f64,
    pub records: Vec<IterRecord>,
}

impl IterTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap).collect()
    }

    pub fn last(&self) -> &IterRecord {
        self.records
            .last()
            .expect("trace has at least the initial record")
    }

    /// True when every record carries its iterates.
    pub fn has_all_points(&self) -> bool {
        self.records.iter().all(|r| r.point.is_some())
    }
}

/// Incremental trace construction shared by every engine.
#[derive(Debug)]
pub struct TraceBuilder {
    trace: IterTrace,
    x0: Vector,
    u0: Vector,
    gap0: f64,
    stop_gap: f64,
    divergence_limit: f64,
    store_every: usize,
}

impl TraceBuilder {
    pub fn new(cfg: &OptConfig, f_star: f64, x0: &Vector, u0: &Vector) -> Self {
        TraceBuilder {
            trace: IterTrace {
                method: cfg.method,
                eta: cfg.eta,
                beta: cfg.beta,
                f_star,
                records: Vec::with_capacity(cfg.max_iters.min(1 << 16) + 1),
            },
            x0: x0.clone(),
            u0: u0.clone(),
            gap0: f64::NAN,
            stop_gap: 0.0,
            divergence_limit: f64::INFINITY,
            store_every: cfg.store_every,
        }
    }

    /// Appends the record for iteration `k`. Returns `true` when the run
    /// should stop.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        cfg: &OptConfig,
        k: usize,
        f: f64,
        g1_norm: f64,
        g2_norm: f64,
        x: &Vector,
        u: &Vector,
        y: &Vector,
        v: &Vector,
        prev: Option<(&Vector, &Vector)>,
    ) -> Result<bool, OptError> {
        if !f.is_finite() || !g1_norm.is_finite() || !g2_norm.is_finite() {
            return Err(OptError::NonFinite { iteration: k });
        }
        let gap = f - self.trace.f_star;
        if k == 0 {
            self.gap0 = gap;
            self.stop_gap = cfg.target_gap.max(cfg.rel_target_gap * gap);
            self.divergence_limit = cfg.divergence_factor * gap.max(f64::MIN_POSITIVE);
        } else if gap > self.divergence_limit {
            return Err(OptError::Diverged {
                iteration: k,
                gap,
                limit: self.divergence_limit,
            });
        }
        let (dx, du) = match prev {
            Some((xp, up)) => (x.dist(xp), u.dist(up)),
            None => (0.0, 0.0),
        };
        let keep = self.store_every > 0 && k.is_multiple_of(self.store_every);
        self.trace.records.push(IterRecord {
            k,
            f,
            gap,
            grad1_norm: g1_norm,
            grad2_norm: g2_norm,
            dx,
            du,
            dist_x0: x.dist(&self.x0),
            dist_u0: u.dist(&self.u0),
            point: keep.then(|| IterPoint {
                x: x.clone(),
                u: u.clone(),
                y: y.clone(),
                v: v.clone(),
            }),
        });
        Ok(gap <= self.stop_gap)
    }

    pub fn finish(self) -> IterTrace {
        self.trace
    }
}

fn check_dims<O: PartitionedObjective + ?Sized>(
    obj: &O,
    x0: &Vector,
    u0: &Vector,
) -> Result<(), OptError> {
    let (d1, d2) = obj.dims();
    if x0.dim() != d1 || u0.dim() != d2 {
        return Err(OptError::DimensionMismatch {
            got_x: x0.dim(),
            got_u: u0.dim(),
            want_x: d1,
            want_u: d2,
        });
    }
    Ok(())
}

fn run_engine<O: PartitionedObjective + ?Sized>(
    obj: &O,
    x0: &Vector,
    u0: &Vector,
    cfg: &OptConfig,
) -> Result<IterTrace, OptError> {
    cfg.validate()?;
    check_dims(obj, x0, u0)?;
    let mut tb = TraceBuilder::new(cfg, obj.f_star(), x0, u0);
    let (mut x, mut u) = (x0.clone(), u0.clone());
    let (mut y, mut v) = (x0.clone(), u0.clone());
    let (mut g1, mut g2) = obj.grads(&y, &v);
    let f = obj.eval(&x, &u);
    if tb.push(cfg, 0, f, g1.norm(), g2.norm(), &x, &u, &y, &v, None)? {
        return Ok(tb.finish());
    }
    for k in 0..cfg.max_iters {
        let mut x_new = y.clone();
        x_new.axpy(-cfg.eta, &g1);
        let mut u_new = v.clone();
        u_new.axpy(-cfg.eta, &g2);
        if cfg.beta == 0.0 {
            y = x_new.clone();
            v = u_new.clone();
        } else {
            y = x_new.clone();
            y.axpy(cfg.beta, &x_new.sub(&x));
            v = u_new.clone();
            v.axpy(cfg.beta, &u_new.sub(&u));
        }
        let x_prev = core::mem::replace(&mut x, x_new);
        let u_prev = core::mem::replace(&mut u, u_new);
        (g1, g2) = obj.grads(&y, &v);
        let f = obj.eval(&x, &u);
        let stop = tb.push(
            cfg,
            k + 1,
            f,
            g1.norm(),
            g2.norm(),
            &x,
            &u,
            &y,
            &v,
            Some((&x_prev, &u_prev)),
        )?;
        if stop {
            break;
        }
    }
    Ok(tb.finish())
}

/// `(x_{k+1}, u_{k+1}) = (x_k, u_k) − η ∇f(x_k, u_k)`.
pub fn run_gd<O: PartitionedObjective + ?Sized>(
    obj: &O,
    x0: &Vector,
    u0: &Vector,
    cfg: &OptConfig,
) -> Result<IterTrace, OptError> {
    if cfg.method != Method::Gd {
        return Err(OptError::WrongMethod {
            configured: cfg.method,
            expected: Method::Gd,
        });
    }
    run_engine(obj, x0, u0, cfg)
}

pub fn run_nesterov<O: PartitionedObjective + ?Sized>(
    obj: &O,
    x0: &Vector,
    u0: &Vector,
    cfg: &OptConfig,
) -> Result<IterTrace, OptError> {
    if cfg.method != Method::Nesterov {
        return Err(OptError::WrongMethod {
            configured: cfg.method,
            expected: Method::Nesterov,
        });
    }
    run_engine(obj, x0, u0, cfg)
}

/// Dispatches on `cfg.method`.
pub fn run<O: PartitionedObjective + ?Sized>(
    obj: &O,
    x0: &Vector,
    u0: &Vector,
    cfg: &OptConfig,
) -> Result<IterTrace, OptError> {
    run_engine(obj, x0, u0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::objective::embed_strongly_convex;
    use alloc::vec;

    fn consts(mu: f64, l1: f64) -> ObjectiveConstants {
        ObjectiveConstants::new(mu, l1, l1, 0.0, 0.0, f64::INFINITY, f64::INFINITY, 0.0).unwrap()
    }

    fn half_square() -> crate::objective::StronglyConvexQuadratic {
        embed_strongly_convex(Matrix::identity(1), Vector::zeros(1)).unwrap()
    }

    #[test]
    fn beta_at_unit_condition_number() {
        let cfg = derive_hyperparams(&consts(1.0, 1.0), 1.0, Method::Nesterov);
        assert!((cfg.beta - 3.0 / 11.0).abs() < 1e-15);
        assert_eq!(cfg.eta, 1.0);
        assert_eq!(
            derive_hyperparams(&consts(1.0, 1.0), 1.0, Method::Gd).beta,
            0.0
        );
    }

    #[test]
    fn beta_increases_towards_one() {
        let betas: Vec<f64> = [1.0, 1e2, 1e4]
            .iter()
            .map(|&k| derive_hyperparams(&consts(1.0, k), DEFAULT_C, Method::Nesterov).beta)
            .collect();
        assert!(betas[0] < betas[1] && betas[1] < betas[2] && betas[2] < 1.0);
    }

    #[test]
    fn gd_newton_step_on_half_square() {
        let obj = half_square();
        let cfg = OptConfig::fixed(Method::Gd, 1.0, 0.0, 5);
        let tr = run_gd(&obj, &Vector::new(vec![1.0]), &Vector::zeros(0), &cfg).unwrap();
        assert_eq!(tr.records[1].gap, 0.0);
        assert_eq!(tr.records[0].dx, 0.0);
        assert_eq!(tr.records[0].du, 0.0);
    }

    #[test]
    fn zero_step_freezes_iterates() {
        let obj = half_square();
        let cfg = OptConfig::fixed(Method::Gd, 0.0, 0.0, 10).with_store_every(1);
        let tr = run_gd(&obj, &Vector::new(vec![0.7]), &Vector::zeros(0), &cfg).unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr
            .records
            .iter()
            .all(|r| r.point.as_ref().unwrap().x[0] == 0.7));
    }

    #[test]
    fn nesterov_stays_at_optimum() {
        let obj = half_square();
        for beta in [0.0, 0.5, 0.99] {
            let cfg = OptConfig::fixed(Method::Nesterov, 1.0, beta, 20).with_store_every(1);
            let tr = run_nesterov(&obj, &Vector::new(vec![3.0]), &Vector::zeros(0), &cfg).unwrap();
            assert!(tr.records[1..]
                .iter()
                .all(|r| r.point.as_ref().unwrap().x[0] == 0.0));
        }
    }

    #[test]
    fn nesterov_with_zero_beta_is_gd() {
        let q = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]);
        let obj = embed_strongly_convex(q, Vector::new(vec![1.0, -1.0])).unwrap();
        let x0 = Vector::new(vec![4.0, 4.0]);
        let gd = run_gd(
            &obj,
            &x0,
            &Vector::zeros(0),
            &OptConfig::fixed(Method::Gd, 0.3, 0.0, 50),
        )
        .unwrap();
        let nag = run_nesterov(
            &obj,
            &x0,
            &Vector::zeros(0),
            &OptConfig::fixed(Method::Nesterov, 0.3, 0.0, 50),
        )
        .unwrap();
        assert_eq!(gd.records, nag.records);
    }

    #[test]
    fn gd_rate_on_quadratic_with_kappa_four() {
        let obj =
            embed_strongly_convex(Matrix::diag(&[1.0, 4.0]), Vector::new(vec![1.0, 1.0])).unwrap();
        let c = obj.constants();
        let cfg = derive_hyperparams(&c, 1.0, Method::Gd)
            .with_max_iters(200)
            .without_early_stop();
        let tr = run_gd(&obj, &Vector::new(vec![5.0, -3.0]), &Vector::zeros(0), &cfg).unwrap();
        let g0 = tr.records[0].gap;
        let rho = gd_rate_bound(c.kappa, 1.0);
        for r in &tr.records {
            assert!(r.gap <= rho.powi(r.k as i32) * g0 + 1e-12, "k={}", r.k);
        }
        for w in tr.records.windows(2) {
            if w[0].gap > 1e-10 * g0 {
                assert!(w[1].gap / w[0].gap <= 1.0 - 1.0 / c.kappa + 1e-12);
            }
        }
    }

    #[test]
    fn runner_rejects_wrong_method_and_bad_config() {
        let obj = half_square();
        let x0 = Vector::new(vec![1.0]);
        let u0 = Vector::zeros(0);
        let cfg = OptConfig::fixed(Method::Nesterov, 1.0, 0.5, 3);
        assert!(matches!(
            run_gd(&obj, &x0, &u0, &cfg),
            Err(OptError::WrongMethod { .. })
        ));
        let mut bad = cfg.clone();
        bad.beta = 1.0;
        assert!(run_nesterov(&obj, &x0, &u0, &bad).is_err());
        assert!(matches!(
            run_nesterov(&obj, &Vector::zeros(2), &u0, &cfg),
            Err(OptError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let obj = half_square();
        let cfg = OptConfig::fixed(Method::Gd, 3.0, 0.0, 100);
        let err = run_gd(&obj, &Vector::new(vec![1.0]), &Vector::zeros(0), &cfg).unwrap_err();
        assert!(matches!(err, OptError::Diverged { .. }));
    }

    #[test]
    fn early_stop_on_relative_target() {
        let obj = embed_strongly_convex(Matrix::diag(&[1.0, 2.0]), Vector::zeros(2)).unwrap();
        let cfg = derive_hyperparams(&obj.constants(), 0.5, Method::Gd).with_max_iters(10_000);
        let tr = run_gd(&obj, &Vector::new(vec![1.0, 1.0]), &Vector::zeros(0), &cfg).unwrap();
        assert!(tr.len() < 10_001);
        assert!(tr.last().gap <= 1e-12 * tr.records[0].gap);
    }
}
