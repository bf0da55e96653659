//! Instance construction, seeded trials and the diagnostics bundle.
//!
//! Seeds: trial `i` uses `t_i = substream_seed(base_seed, i)`. Its
//! initialization is drawn from `substream_seed(t_i, 1)`, and an instance
//! drawn per trial from `substream_seed(t_i, 0)`. An instance shared by all
//! trials of a case is drawn from `substream_seed(base_seed, 2^32)`, the same
//! seed for every case.

use std::sync::Arc;

use psc_core::additive::{check_sigma_condition, generate_additive, AdditiveModel};
use psc_core::diagnostics::{
    check_aux_bounds, check_displacements, check_fgap_u_change, check_grad_dominance,
    check_gradient_norm_bound, check_lyapunov_decay, check_lyapunov_envelope,
    check_minimizer_lipschitz, check_phi0_bound, check_pl, check_requirements, lyapunov_trace,
    trajectory_points, CheckReport, FgapSample, LyapunovParams, MarginTracker, DEFAULT_TOLERANCE,
};
use psc_core::linalg::{gaussian_vector, matmul_tr, random_orthogonal, substream_seed};
use psc_core::objective::{
    embed_strongly_convex, BallSpec, ObjectiveError, StronglyConvexQuadratic,
};
use psc_core::optim::{derive_hyperparams, run, OptError};
use psc_core::relunet::{
    init_scaled_gaussian, make_dataset, net_constants, run_nesterov_net, NetObjective, ReluNet,
};
use psc_core::{
    IterTrace, Matrix, Method, ObjectiveConstants, OptConfig, PartitionedObjective, Rng, Vector,
};
use serde::Serialize;

use crate::spec::{additive_gen_spec, Case, ExperimentSpec, ModelSpec, QuadraticSpec};
use crate::PscError;

/// Index of the substream an instance shared across trials is drawn from.
pub const SHARED_INSTANCE_STREAM: u64 = 1 << 32;

/// Iterate storage per run is capped at this many `f64`s; runs above it keep
/// a strided subset and skip the checks that need every iterate.
pub const STORAGE_BUDGET: usize = 20_000_000;

/// Trajectory and random in-ball points per pointwise check.
pub const POINTWISE_SAMPLES: usize = 200;

/// Pairs for the minimizer Lipschitz check.
pub const LIPSCHITZ_PAIRS: usize = 50;

pub enum Instance {
    Quadratic(StronglyConvexQuadratic),
    Additive(AdditiveModel),
    Net(NetObjective),
}

impl Instance {
    pub fn objective(&self) -> &dyn PartitionedObjective {
        match self {
            Instance::Quadratic(q) => q,
            Instance::Additive(a) => a,
            Instance::Net(n) => n,
        }
    }
}

pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    substream_seed(base_seed, trial as u64)
}

/// `Q = U diag(λ) Uᵀ` with `λ_i = κ^{i/(n−1)}` and `b ~ N(0, b_scale²)`.
pub fn generate_quadratic(
    q: &QuadraticSpec,
    seed: u64,
) -> Result<StronglyConvexQuadratic, ObjectiveError> {
    let n = q.dim;
    let mut rng = Rng::new(seed);
    let u = random_orthogonal(&mut rng, n)?;
    let lam: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                q.kappa.powf(i as f64 / (n - 1) as f64)
            }
        })
        .collect();
    let ul = Matrix::from_fn(n, n, |i, j| u[(i, j)] * lam[j]);
    let m = matmul_tr(&ul, &u)?;
    let m = m.add(&m.transpose()).scale(0.5);
    let b = gaussian_vector(&mut rng, n, q.b_scale);
    embed_strongly_convex(m, b)
}

/// The instance shared by every trial of `case`, if the model has one.
pub fn shared_instance(
    spec: &ExperimentSpec,
    case: &Case,
) -> Result<Option<Arc<Instance>>, PscError> {
    let seed = substream_seed(spec.base_seed, SHARED_INSTANCE_STREAM);
    Ok(match &spec.model {
        ModelSpec::Quadratic(q) => {
            Some(Arc::new(Instance::Quadratic(generate_quadratic(q, seed)?)))
        }
        ModelSpec::Additive(a) if !a.instance_per_trial => {
            let s = case.sigma_max_a2.expect("additive cases carry sigma");
            let inst = generate_additive(&additive_gen_spec(a, s, seed))?;
            Some(Arc::new(Instance::Additive(AdditiveModel::new(inst)?)))
        }
        _ => None,
    })
}

/// Everything a trial starts from.
pub struct TrialSetup {
    pub trial: usize,
    pub seed: u64,
    pub instance: Arc<Instance>,
    pub x0: Vector,
    pub u0: Vector,
    /// Initial layer weights of a net.
    pub weights0: Option<Vec<Matrix>>,
    pub alpha0: Option<f64>,
}

/// A trial that cannot run, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedTrial {
    pub trial: usize,
    pub reason: String,
}

pub fn setup_trial(
    spec: &ExperimentSpec,
    case: &Case,
    shared: Option<&Arc<Instance>>,
    trial: usize,
) -> Result<Result<TrialSetup, SkippedTrial>, PscError> {
    let seed = trial_seed(spec.base_seed, trial);
    let mut init = Rng::new(substream_seed(seed, 1));
    let instance = match (shared, &spec.model) {
        (Some(s), _) => s.clone(),
        (None, ModelSpec::Additive(a)) => {
            let s = case.sigma_max_a2.expect("additive cases carry sigma");
            let inst = generate_additive(&additive_gen_spec(a, s, substream_seed(seed, 0)))?;
            Arc::new(Instance::Additive(AdditiveModel::new(inst)?))
        }
        (None, ModelSpec::Relunet(r)) => {
            let mut rng = Rng::new(substream_seed(seed, 0));
            let widths = r.widths();
            let (x, y) = make_dataset(&mut rng, r.n, r.d0, r.d_out)?;
            let net = ReluNet::new(widths.clone(), x, y)?;
            let w0 = init_scaled_gaussian(&mut init, &widths);
            let nc = net_constants(&net, &w0)?;
            let alpha0 = nc.alpha0;
            let constants = match nc.objective_constants() {
                Ok(c) => c,
                Err(e) => {
                    return Ok(Err(SkippedTrial {
                        trial,
                        reason: format!("alpha0 = {alpha0:e}: {e}"),
                    }))
                }
            };
            let (x0, u0) = net.flatten(&w0);
            return Ok(Ok(TrialSetup {
                trial,
                seed,
                instance: Arc::new(Instance::Net(NetObjective::new(net, constants))),
                x0,
                u0,
                weights0: Some(w0),
                alpha0: Some(alpha0),
            }));
        }
        (None, ModelSpec::Quadratic(_)) => unreachable!("quadratic instances are shared"),
    };
    let (d1, d2) = instance.objective().dims();
    let x0 = gaussian_vector(&mut init, d1, spec.x0_std);
    let u0 = gaussian_vector(&mut init, d2, spec.u0_std);
    Ok(Ok(TrialSetup {
        trial,
        seed,
        instance,
        x0,
        u0,
        weights0: None,
        alpha0: None,
    }))
}

pub fn method_config(
    spec: &ExperimentSpec,
    constants: &ObjectiveConstants,
    method: Method,
) -> OptConfig {
    let cfg = derive_hyperparams(constants, spec.c, method).with_max_iters(spec.max_iters);
    if spec.early_stop {
        cfg
    } else {
        cfg.without_early_stop()
    }
}

/// Stride keeping at least [`POINTWISE_SAMPLES`] iterates, or every iterate
/// when that fits in [`STORAGE_BUDGET`].
fn store_stride(setup: &TrialSetup, max_iters: usize) -> usize {
    let dim = setup.x0.dim() + setup.u0.dim();
    if (max_iters + 1).saturating_mul(4 * dim.max(1)) <= STORAGE_BUDGET {
        1
    } else {
        (max_iters / POINTWISE_SAMPLES).max(1)
    }
}

pub fn run_method(setup: &TrialSetup, cfg: &OptConfig) -> Result<IterTrace, OptError> {
    match (&*setup.instance, &setup.weights0) {
        (Instance::Net(n), Some(w0)) => run_nesterov_net(n.net(), w0, cfg),
        (inst, _) => run(inst.objective(), &setup.x0, &setup.u0, cfg),
    }
}

/// Traces of one trial, one per configured method, in spec order.
pub struct TrialOutput {
    pub trial: usize,
    pub seed: u64,
    pub kappa: f64,
    pub alpha0: Option<f64>,
    pub runs: Vec<(Method, OptConfig, IterTrace)>,
    pub checks: Option<Vec<CheckReport>>,
}

fn optimizer_error(trial: usize, method: Method, source: OptError) -> PscError {
    PscError::Optimizer {
        trial,
        method: method.name(),
        source,
    }
}

/// Runs every method of the experiment spec; with `diagnose` the iterates are stored
/// and the full check bundle is evaluated before they are dropped.
pub fn run_trial(
    spec: &ExperimentSpec,
    setup: &TrialSetup,
    diagnose: bool,
) -> Result<TrialOutput, PscError> {
    let constants = setup.instance.objective().constants();
    let mut runs = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let mut cfg = method_config(spec, &constants, method);
        if diagnose {
            cfg = cfg.with_store_every(store_stride(setup, spec.max_iters));
        }
        let trace = run_method(setup, &cfg).map_err(|e| optimizer_error(setup.trial, method, e))?;
        runs.push((method, cfg, trace));
    }
    let checks = if diagnose {
        Some(diagnostics(spec, setup, &runs))
    } else {
        None
    };
    for (_, _, trace) in &mut runs {
        for r in &mut trace.records {
            r.point = None;
        }
    }
    Ok(TrialOutput {
        trial: setup.trial,
        seed: setup.seed,
        kappa: constants.kappa,
        alpha0: setup.alpha0,
        runs,
        checks,
    })
}

/// Evenly spaced subset of at most `n` items, first and last included.
fn thin<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    if items.len() <= n || n < 2 {
        return items.to_vec();
    }
    (0..n)
        .map(|i| items[i * (items.len() - 1) / (n - 1)].clone())
        .collect()
}

fn renamed(mut r: CheckReport, suffix: &str) -> CheckReport {
    r.name = format!("{}_{suffix}", r.name);
    r
}

/// The check bundle over one trial:
///
/// - the convergence requirements for each method;
/// - the additive `σ` condition;
/// - whether each run stays in the balls of radii `R_x`, `R_u` around the
///   initialization, with the first exit recorded;
/// - PL, gradient dominance and the auxiliary gradient bounds at up to 200
///   trajectory points and at 200 uniform points of the initialization ball;
/// - the function-gap-under-`u`-change bound at 200 in-ball samples;
/// - minimizer Lipschitzness over 50 in-ball pairs;
/// - along the Nesterov run: `φ_0 ≤ 2 gap_0`, one-step decay, envelope,
///   displacement bounds and the gradient-norm bound.
///
/// Infinite radii are replaced by `1 + ‖x_0 − x⋆(u_0)‖` and `1 + ‖u_0‖`.
pub fn diagnostics(
    spec: &ExperimentSpec,
    setup: &TrialSetup,
    runs: &[(Method, OptConfig, IterTrace)],
) -> Vec<CheckReport> {
    let obj = setup.instance.objective();
    let constants = obj.constants();
    let mut out = Vec::new();
    for (method, cfg, trace) in runs {
        out.push(check_requirements(
            &constants,
            cfg,
            trace.records[0].gap,
            *method,
            spec.requirement_constants(),
        ));
    }
    if let Instance::Additive(model) = &*setup.instance {
        out.push(check_sigma_condition(model, spec.ctilde));
    }
    for (method, _, trace) in runs {
        out.push(check_in_ball(trace, *method, &constants));
    }

    let mut rng = Rng::new(substream_seed(setup.seed, 2));
    let x_fallback = match obj.inner_argmin(&setup.u0) {
        Ok(xs) => 1.0 + setup.x0.dist(&xs),
        Err(_) => 1.0 + setup.x0.norm(),
    };
    let u_fallback = 1.0 + setup.u0.norm();
    let xball = BallSpec::new(setup.x0.clone(), constants.r_x);
    let uball = BallSpec::new(setup.u0.clone(), constants.r_u);

    let preferred = runs
        .iter()
        .find(|(m, _, _)| *m == Method::Nesterov)
        .or_else(|| runs.first())
        .map(|(_, _, t)| t);
    let traj = preferred
        .map(|t| thin(&trajectory_points(t), POINTWISE_SAMPLES))
        .unwrap_or_default();
    let ball: Vec<(Vector, Vector)> = (0..POINTWISE_SAMPLES)
        .map(|_| {
            (
                xball.sample(&mut rng, x_fallback),
                uball.sample(&mut rng, u_fallback),
            )
        })
        .collect();
    for (pts, suffix) in [(&traj, "trajectory"), (&ball, "ball")] {
        out.push(renamed(check_pl(obj, pts), suffix));
        out.push(renamed(check_grad_dominance(obj, pts), suffix));
        out.push(renamed(check_aux_bounds(obj, pts), suffix));
    }
    let samples: Vec<FgapSample> = (0..POINTWISE_SAMPLES)
        .map(|_| FgapSample {
            x: xball.sample(&mut rng, x_fallback),
            u: uball.sample(&mut rng, u_fallback),
            v: uball.sample(&mut rng, u_fallback),
            qhat: rng.uniform_range(0.1f64.ln(), 10f64.ln()).exp(),
        })
        .collect();
    out.push(check_fgap_u_change(obj, &samples));
    let pairs: Vec<(Vector, Vector)> = (0..LIPSCHITZ_PAIRS)
        .map(|_| {
            (
                uball.sample(&mut rng, u_fallback),
                uball.sample(&mut rng, u_fallback),
            )
        })
        .collect();
    out.push(check_minimizer_lipschitz(obj, &pairs));

    if let Some((_, cfg, trace)) = runs.iter().find(|(m, _, _)| *m == Method::Nesterov) {
        out.extend(lyapunov_checks(spec, obj, &constants, cfg, trace));
        out.push(check_gradient_norm_bound(trace));
    }
    out
}

fn check_in_ball(trace: &IterTrace, method: Method, c: &ObjectiveConstants) -> CheckReport {
    let mut t = MarginTracker::new(
        &format!("trajectory_in_ball_{}", method.name()),
        DEFAULT_TOLERANCE,
    );
    let mut first_exit = None;
    for r in &trace.records {
        t.observe(r.k, r.dist_x0, c.r_x);
        t.observe(r.k, r.dist_u0, c.r_u);
        if first_exit.is_none() && (r.dist_x0 > c.r_x || r.dist_u0 > c.r_u) {
            first_exit = Some(r.k);
        }
    }
    let mut report = t.finish();
    report.details = match first_exit {
        Some(k) => format!("first exit from the ball at k = {k}"),
        None => "stays in the ball".into(),
    };
    report
}

const LYAPUNOV_CHECKS: [&str; 5] = [
    "phi0_bound",
    "lyapunov_decay",
    "lyapunov_envelope",
    "displacement_x",
    "displacement_u",
];

fn lyapunov_checks(
    spec: &ExperimentSpec,
    obj: &dyn PartitionedObjective,
    constants: &ObjectiveConstants,
    cfg: &OptConfig,
    trace: &IterTrace,
) -> Vec<CheckReport> {
    let skip = |why: &str| {
        LYAPUNOV_CHECKS
            .iter()
            .map(|n| CheckReport::not_applicable(n, why))
            .collect()
    };
    if !trace.has_all_points() {
        return skip("iterates exceed the storage budget");
    }
    let params = match LyapunovParams::new(spec.c, constants.kappa, cfg.eta, cfg.beta, spec.q1_form)
    {
        Ok(p) => p,
        Err(e) => return skip(&e.to_string()),
    };
    let recs = match lyapunov_trace(obj, trace, &params) {
        Ok(r) => r,
        Err(e) => return skip(&e.to_string()),
    };
    let phi0 = recs[0].phi;
    let (dx, du) = check_displacements(trace, phi0, &params, constants);
    vec![
        check_phi0_bound(&recs),
        check_lyapunov_decay(&recs, &params),
        check_lyapunov_envelope(&recs, &params),
        dx,
        du,
    ]
}
