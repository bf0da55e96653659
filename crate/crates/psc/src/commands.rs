//! `run`, `check` and `rates`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use psc_core::diagnostics::{overall_status, rate_fit_tail, CheckReport, CheckStatus, RateFit};
use psc_core::optim::{gd_rate_bound, nesterov_rate_bound};
use psc_core::{IterTrace, Method, ObjectiveConstants};
use rayon::prelude::*;
use serde::Serialize;

use crate::experiment::{
    run_trial, setup_trial, shared_instance, Instance, SkippedTrial, TrialOutput, TrialSetup,
};
use crate::report::{case_report, CaseReport, CaseSummary, RunReport};
use crate::spec::{Case, ExperimentSpec};
use crate::svg::{log_plot, Series, PALETTE};
use crate::PscError;

pub const TRACE_HEADER: &str =
    "case,trial,method,k,f,gap,grad1_norm,grad2_norm,dx,du,dist_x0,dist_u0";
pub const RATES_HEADER: &str =
    "case,trial,kappa,rho_gd,r2_gd,rho_nesterov,r2_nesterov,band_gd,band_nesterov,floor_nesterov,floor_ok,log_ratio,status";

#[derive(Debug, Clone, Copy)]
pub struct Options {
    /// Upper bound on concurrently running trials.
    pub jobs: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PscError + '_ {
    move |source| PscError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PscError> {
    fs::write(path, contents).map_err(io_error(path))
}

fn create_dir(path: &Path) -> Result<(), PscError> {
    fs::create_dir_all(path).map_err(io_error(path))
}

fn output_root(spec: &ExperimentSpec) -> Result<PathBuf, PscError> {
    spec.output_dir.clone().ok_or_else(|| {
        PscError::Spec("no output_dir: set it in the experiment spec, pass --out, or set PSC_OUT_DIR".into())
    })
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn pool(opts: Options) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .expect("thread pool")
}

/// Instances and trial setups of one case, drawn serially.
struct Prepared {
    case: Case,
    setups: Vec<TrialSetup>,
    skipped: Vec<SkippedTrial>,
}

fn prepare(spec: &ExperimentSpec) -> Result<Vec<Prepared>, PscError> {
    spec.validate()?;
    spec.cases()
        .into_iter()
        .map(|case| {
            let shared: Option<Arc<Instance>> = shared_instance(spec, &case)?;
            let mut setups = Vec::new();
            let mut skipped = Vec::new();
            for trial in 0..spec.trials {
                match setup_trial(spec, &case, shared.as_ref(), trial)? {
                    Ok(s) => setups.push(s),
                    Err(s) => skipped.push(s),
                }
            }
            Ok(Prepared {
                case,
                setups,
                skipped,
            })
        })
        .collect()
}

fn constants_of(p: &Prepared) -> Option<ObjectiveConstants> {
    p.setups.first().map(|s| s.instance.objective().constants())
}

/// Runs `jobs` in parallel and returns their results in input order, or the
/// first error in input order.
fn par_run<T: Send, J: Sync>(
    opts: Options,
    jobs: &[J],
    f: impl Fn(&J) -> Result<T, PscError> + Sync + Send,
) -> Result<Vec<T>, PscError> {
    let results: Vec<Result<T, PscError>> =
        pool(opts).install(|| jobs.par_iter().map(&f).collect());
    results.into_iter().collect()
}

fn trace_rows(out: &mut String, case: &str, trial: usize, trace: &IterTrace) {
    let m = trace.method.name();
    for r in &trace.records {
        writeln!(
            out,
            "{case},{trial},{m},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.k, r.f, r.gap, r.grad1_norm, r.grad2_norm, r.dx, r.du, r.dist_x0, r.dist_u0
        )
        .unwrap();
    }
}

fn trace_preamble() -> String {
    format!(
        "# psc trace v1: one row per (case, trial, method, k); gap = f - f_star; gradient norms at the \
         extrapolated point (y_k, v_k); dx = |x_k - x_(k-1)|, du = |u_k - u_(k-1)|; dist_x0 = |x_k - x_0|, \
         dist_u0 = |u_k - u_0|; floats carry 17 significant digits\n{TRACE_HEADER}\n"
    )
}

const TMP_DIR: &str = ".psc-tmp";

fn tmp_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join(TMP_DIR).join(format!("trial-{trial:06}.csv"))
}

/// Concatenates the per-trial temporary files of `trials` into `trace.csv`
/// and removes the temporary directory.
fn merge_traces(dir: &Path, trials: &[usize]) -> Result<(), PscError> {
    let mut all = trace_preamble();
    for &t in trials {
        let p = tmp_path(dir, t);
        all.push_str(&fs::read_to_string(&p).map_err(io_error(&p))?);
    }
    write_file(&dir.join("trace.csv"), &all)?;
    let tmp = dir.join(TMP_DIR);
    fs::remove_dir_all(&tmp).map_err(io_error(&tmp))
}

fn method_color(m: Method) -> &'static str {
    match m {
        Method::Gd => PALETTE[0],
        Method::Nesterov => PALETTE[1],
    }
}

fn plots(case: &CaseReport) -> (String, String) {
    let mut loss = Vec::new();
    let mut disp = Vec::new();
    for agg in &case.methods {
        let color = method_color(agg.method);
        let name = agg.method.name();
        let col = |f: fn(&crate::report::ReportRow) -> (f64, f64)| -> (Vec<f64>, Vec<f64>) {
            agg.rows.iter().map(f).unzip()
        };
        let (m, s) = col(|r| (r.gap.mean, r.gap.std));
        loss.push(Series {
            label: name.into(),
            color,
            dashed: false,
            mean: m,
            std: s,
        });
        let (m, s) = col(|r| (r.dx.mean, r.dx.std));
        disp.push(Series {
            label: format!("{name} |dx|"),
            color,
            dashed: false,
            mean: m,
            std: s,
        });
        let (m, s) = col(|r| (r.du.mean, r.du.std));
        disp.push(Series {
            label: format!("{name} |du|"),
            color,
            dashed: true,
            mean: m,
            std: s,
        });
    }
    (
        log_plot(
            &format!("{}: f(x_k,u_k) - f*", case.label),
            "loss gap (mean ± 1 std)",
            &loss,
        ),
        log_plot(
            &format!("{}: iterate displacement", case.label),
            "displacement norm (mean ± 1 std)",
            &disp,
        ),
    )
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub cases: Vec<CaseReport>,
}

#[derive(Serialize)]
struct Summary<'a> {
    spec: &'a ExperimentSpec,
    cases: Vec<CaseSummary>,
}

fn case_dir(root: &Path, prepared: &[Prepared], case: &Case) -> PathBuf {
    if prepared.len() == 1 {
        root.to_path_buf()
    } else {
        root.join(&case.label)
    }
}

/// Runs every trial of every case and writes `trace.csv`, `report.json`,
/// `loss.svg` and `displacement.svg` per case, plus `summary.json` when the
/// spec has several cases. The check bundle is evaluated on the first
/// completed trial of each case.
pub fn cmd_run(spec: &ExperimentSpec, opts: Options) -> Result<RunOutcome, PscError> {
    let root = output_root(spec)?;
    let prepared = prepare(spec)?;
    let mut jobs = Vec::new();
    for (ci, p) in prepared.iter().enumerate() {
        let dir = case_dir(&root, &prepared, &p.case);
        create_dir(&dir.join(TMP_DIR))?;
        for (i, s) in p.setups.iter().enumerate() {
            jobs.push((ci, dir.clone(), s, i == 0));
        }
    }
    let outputs = par_run(opts, &jobs, |(ci, dir, setup, diagnose)| {
        let out = run_trial(spec, setup, *diagnose)?;
        let mut rows = String::new();
        for (_, _, trace) in &out.runs {
            trace_rows(&mut rows, &prepared[*ci].case.label, out.trial, trace);
        }
        write_file(&tmp_path(dir, out.trial), &rows)?;
        Ok(out)
    })?;

    let mut by_case: Vec<Vec<TrialOutput>> = prepared.iter().map(|_| Vec::new()).collect();
    for ((ci, _, _, _), out) in jobs.iter().zip(outputs) {
        by_case[*ci].push(out);
    }
    let mut cases = Vec::with_capacity(prepared.len());
    for (p, outs) in prepared.iter().zip(by_case) {
        let dir = case_dir(&root, &prepared, &p.case);
        let trials: Vec<usize> = outs.iter().map(|o| o.trial).collect();
        merge_traces(&dir, &trials)?;
        let report = case_report(spec, &p.case, constants_of(p), &outs, p.skipped.clone());
        write_file(
            &dir.join("report.json"),
            &json(&RunReport {
                spec,
                case: &report,
            }),
        )?;
        let (loss, disp) = plots(&report);
        write_file(&dir.join("loss.svg"), &loss)?;
        write_file(&dir.join("displacement.svg"), &disp)?;
        cases.push(report);
    }
    if cases.len() > 1 {
        let summary = Summary {
            spec,
            cases: cases.iter().map(CaseSummary::from).collect(),
        };
        write_file(&root.join("summary.json"), &json(&summary))?;
    }
    Ok(RunOutcome {
        output_dir: root,
        cases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckCase {
    pub label: String,
    pub sigma_max_a2: Option<f64>,
    /// The trial the checks ran on; `None` when every trial was skipped.
    pub trial: Option<usize>,
    pub constants: Option<ObjectiveConstants>,
    pub status: CheckStatus,
    /// Names and details of the violated checks.
    pub violations: Vec<String>,
    pub checks: Vec<CheckReport>,
    pub skipped: Vec<SkippedTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub status: CheckStatus,
    pub cases: Vec<CheckCase>,
}

impl CheckOutcome {
    /// 0 iff every applicable check holds.
    pub fn exit_code(&self) -> i32 {
        if self.status == CheckStatus::Holds {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct CheckReportFile<'a> {
    spec: &'a ExperimentSpec,
    #[serde(flatten)]
    outcome: &'a CheckOutcome,
}

/// Runs the first completed trial of each case with every check and writes
/// `report.json`.
pub fn cmd_check(spec: &ExperimentSpec, opts: Options) -> Result<CheckOutcome, PscError> {
    let root = output_root(spec)?;
    let prepared = prepare(spec)?;
    let firsts: Vec<Option<&TrialSetup>> = prepared.iter().map(|p| p.setups.first()).collect();
    let outputs = par_run(opts, &firsts, |s| match s {
        Some(s) => run_trial(spec, s, true).map(Some),
        None => Ok(None),
    })?;
    let cases: Vec<CheckCase> = prepared
        .iter()
        .zip(outputs)
        .map(|(p, out)| {
            let checks = out
                .as_ref()
                .and_then(|o| o.checks.clone())
                .unwrap_or_default();
            let violations = checks
                .iter()
                .filter(|c| c.violated())
                .map(|c| format!("{}: {}", c.name, c.details))
                .collect();
            CheckCase {
                label: p.case.label.clone(),
                sigma_max_a2: p.case.sigma_max_a2,
                trial: out.as_ref().map(|o| o.trial),
                constants: constants_of(p),
                status: overall_status(&checks),
                violations,
                checks,
                skipped: p.skipped.clone(),
            }
        })
        .collect();
    let status = if cases.iter().any(|c| c.status == CheckStatus::Violated) {
        CheckStatus::Violated
    } else if cases.iter().all(|c| c.status == CheckStatus::Holds) {
        CheckStatus::Holds
    } else {
        CheckStatus::NotApplicable
    };
    let outcome = CheckOutcome {
        output_dir: root.clone(),
        status,
        cases,
    };
    create_dir(&root)?;
    write_file(
        &root.join("report.json"),
        &json(&CheckReportFile {
            spec,
            outcome: &outcome,
        }),
    )?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub case: String,
    pub trial: usize,
    pub kappa: f64,
    pub gd: Option<RateFit>,
    pub nesterov: Option<RateFit>,
    /// `1 − c/(4κ)`.
    pub band_gd: f64,
    /// `1 − c/(4√κ)`.
    pub band_nesterov: f64,
    /// `1 − c/(2√κ) − 0.05`, below which a fitted Nesterov rate is suspect.
    pub floor_nesterov: f64,
    /// `ln ρ_Nesterov / ln ρ_GD`.
    pub log_ratio: f64,
    /// `ok`, or why a fit is missing.
    pub status: String,
}

impl RateRow {
    pub fn floor_ok(&self) -> bool {
        self.nesterov.is_some_and(|f| f.rho >= self.floor_nesterov)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

fn rate_row(
    spec: &ExperimentSpec,
    case: &Case,
    trial: usize,
    kappa: f64,
    traces: &[(Method, &IterTrace)],
) -> RateRow {
    let mut status = Vec::new();
    let mut fit = |m: Method| {
        let t = traces.iter().find(|(tm, _)| *tm == m)?.1;
        match rate_fit_tail(&t.gaps(), spec.rate_burn_in_fraction) {
            Ok(f) => Some(f),
            Err(e) => {
                status.push(format!("{} fit failed: {e}", m.name()));
                None
            }
        }
    };
    let gd = fit(Method::Gd);
    let nesterov = fit(Method::Nesterov);
    let log_ratio = match (gd, nesterov) {
        (Some(g), Some(n)) => n.rho.ln() / g.rho.ln(),
        _ => f64::NAN,
    };
    RateRow {
        case: case.label.clone(),
        trial,
        kappa,
        gd,
        nesterov,
        band_gd: gd_rate_bound(kappa, spec.c),
        band_nesterov: nesterov_rate_bound(kappa, spec.c),
        floor_nesterov: 1.0 - spec.c / (2.0 * kappa.sqrt()) - 0.05,
        log_ratio,
        status: if status.is_empty() {
            "ok".into()
        } else {
            status.join("; ")
        },
    }
}

fn rates_csv(rows: &[RateRow]) -> String {
    let mut s = format!(
        "# psc rates v1: per trial, tail-fitted contraction rho and r2 per method, predicted bands \
         1 - c/(4 kappa) and 1 - c/(4 sqrt(kappa)), Nesterov floor 1 - c/(2 sqrt(kappa)) - 0.05, \
         log_ratio = ln(rho_nesterov)/ln(rho_gd)\n{RATES_HEADER}\n"
    );
    for r in rows {
        writeln!(
            s,
            "{},{},{:.16e},{},{},{},{},{:.16e},{:.16e},{:.16e},{},{:.16e},{}",
            r.case,
            r.trial,
            r.kappa,
            fmt_opt(r.gd.map(|f| f.rho)),
            fmt_opt(r.gd.map(|f| f.r2)),
            fmt_opt(r.nesterov.map(|f| f.rho)),
            fmt_opt(r.nesterov.map(|f| f.r2)),
            r.band_gd,
            r.band_nesterov,
            r.floor_nesterov,
            r.floor_ok(),
            r.log_ratio,
            r.status.replace(',', ";")
        )
        .unwrap();
    }
    s
}

/// Fits contraction rates for both methods in every trial and writes
/// `rates.csv`. Failed fits and skipped trials are flagged in their rows.
pub fn cmd_rates(spec: &ExperimentSpec, opts: Options) -> Result<Vec<RateRow>, PscError> {
    if !(spec.has_method(Method::Gd) && spec.has_method(Method::Nesterov)) {
        return Err(PscError::Spec(
            "rates needs both gd and nesterov in methods".into(),
        ));
    }
    let root = output_root(spec)?;
    let prepared = prepare(spec)?;
    let jobs: Vec<(usize, &TrialSetup)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(ci, p)| p.setups.iter().map(move |s| (ci, s)))
        .collect();
    let outputs = par_run(opts, &jobs, |(ci, s)| {
        let out = run_trial(spec, s, false)?;
        let traces: Vec<(Method, &IterTrace)> = out.runs.iter().map(|(m, _, t)| (*m, t)).collect();
        Ok(rate_row(
            spec,
            &prepared[*ci].case,
            out.trial,
            out.kappa,
            &traces,
        ))
    })?;
    let mut by_case: Vec<Vec<RateRow>> = prepared.iter().map(|_| Vec::new()).collect();
    for ((ci, _), r) in jobs.iter().zip(outputs) {
        by_case[*ci].push(r);
    }
    let mut rows = Vec::new();
    for (p, mut done) in prepared.iter().zip(by_case) {
        for s in &p.skipped {
            done.push(RateRow {
                case: p.case.label.clone(),
                trial: s.trial,
                kappa: f64::NAN,
                gd: None,
                nesterov: None,
                band_gd: f64::NAN,
                band_nesterov: f64::NAN,
                floor_nesterov: f64::NAN,
                log_ratio: f64::NAN,
                status: format!("skipped: {}", s.reason),
            });
        }
        done.sort_by_key(|r| r.trial);
        rows.extend(done);
    }
    create_dir(&root)?;
    write_file(&root.join("rates.csv"), &rates_csv(&rows))?;
    Ok(rows)
}
