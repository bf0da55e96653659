//! Across-trial aggregates and the JSON report.

use psc_core::diagnostics::{overall_status, rate_fit_tail, CheckReport, CheckStatus, RateFit};
use psc_core::{IterTrace, Method, ObjectiveConstants};
use serde::Serialize;

use crate::experiment::{SkippedTrial, TrialOutput};
use crate::spec::{Case, ExperimentSpec};

/// Floor applied before taking logarithms of gaps.
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    // `+ 0.0` turns the `-0.0` of an all-zero sum into `0.0`.
    let mean = values.iter().sum::<f64>() / n as f64 + 0.0;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std }
}

/// Statistics of one iteration over the trials that reached it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub k: usize,
    pub trials: usize,
    pub gap: MeanStd,
    pub dx: MeanStd,
    pub du: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub eta: f64,
    pub beta: f64,
    /// `ln max(gap, 1e-300)` at each trial's last iteration.
    pub final_log_gap: MeanStd,
    /// `max_{k ≥ 1} mean‖Δu_k‖ / mean‖Δx_k‖`.
    pub max_du_dx_ratio: f64,
    pub rows: Vec<ReportRow>,
}

pub fn aggregate(method: Method, traces: &[&IterTrace]) -> MethodAggregate {
    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(len);
    let mut max_ratio = f64::NAN;
    for k in 0..len {
        let at: Vec<_> = traces.iter().filter_map(|t| t.records.get(k)).collect();
        let col = |f: fn(&psc_core::optim::IterRecord) -> f64| {
            at.iter().map(|r| f(r)).collect::<Vec<_>>()
        };
        let row = ReportRow {
            k,
            trials: at.len(),
            gap: mean_std(&col(|r| r.gap)),
            dx: mean_std(&col(|r| r.dx)),
            du: mean_std(&col(|r| r.du)),
        };
        if k >= 1 && row.dx.mean > 0.0 {
            let ratio = row.du.mean / row.dx.mean;
            if max_ratio.is_nan() || ratio > max_ratio {
                max_ratio = ratio;
            }
        }
        rows.push(row);
    }
    let finals: Vec<f64> = traces
        .iter()
        .map(|t| t.last().gap.max(LOG_FLOOR).ln())
        .collect();
    let first = traces.first();
    MethodAggregate {
        method,
        eta: first.map_or(f64::NAN, |t| t.eta),
        beta: first.map_or(f64::NAN, |t| t.beta),
        final_log_gap: mean_std(&finals),
        max_du_dx_ratio: max_ratio,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    pub initial_gap: f64,
    pub final_gaps: Vec<(Method, f64)>,
    /// Smallest gap over the run.
    pub best_gaps: Vec<(Method, f64)>,
    /// Tail rate fit of each run; `None` when too few points are usable.
    pub rates: Vec<(Method, Option<RateFit>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_max_a2: Option<f64>,
    /// Constants of the first completed trial's instance.
    pub constants: Option<ObjectiveConstants>,
    pub trials: Vec<TrialSummary>,
    pub skipped: Vec<SkippedTrial>,
    pub methods: Vec<MethodAggregate>,
    pub status: CheckStatus,
    pub checks: Vec<CheckReport>,
}

impl CaseReport {
    pub fn method(&self, m: Method) -> Option<&MethodAggregate> {
        self.methods.iter().find(|a| a.method == m)
    }
}

pub fn case_report(
    spec: &ExperimentSpec,
    case: &Case,
    constants: Option<ObjectiveConstants>,
    outputs: &[TrialOutput],
    skipped: Vec<SkippedTrial>,
) -> CaseReport {
    let methods = spec
        .methods
        .iter()
        .map(|&m| {
            let traces: Vec<&IterTrace> = outputs
                .iter()
                .flat_map(|o| {
                    o.runs
                        .iter()
                        .filter(|(rm, _, _)| *rm == m)
                        .map(|(_, _, t)| t)
                })
                .collect();
            aggregate(m, &traces)
        })
        .collect();
    let checks: Vec<CheckReport> = outputs
        .iter()
        .find_map(|o| o.checks.clone())
        .unwrap_or_default();
    let trials = outputs
        .iter()
        .map(|o| TrialSummary {
            trial: o.trial,
            seed: o.seed,
            kappa: o.kappa,
            alpha0: o.alpha0,
            initial_gap: o
                .runs
                .first()
                .map_or(f64::NAN, |(_, _, t)| t.records[0].gap),
            final_gaps: o.runs.iter().map(|(m, _, t)| (*m, t.last().gap)).collect(),
            best_gaps: o
                .runs
                .iter()
                .map(|(m, _, t)| {
                    (
                        *m,
                        t.records
                            .iter()
                            .map(|r| r.gap)
                            .fold(f64::INFINITY, f64::min),
                    )
                })
                .collect(),
            rates: o
                .runs
                .iter()
                .map(|(m, _, t)| {
                    (
                        *m,
                        rate_fit_tail(&t.gaps(), spec.rate_burn_in_fraction).ok(),
                    )
                })
                .collect(),
        })
        .collect();
    CaseReport {
        label: case.label.clone(),
        sigma_max_a2: case.sigma_max_a2,
        constants,
        trials,
        skipped,
        methods,
        status: overall_status(&checks),
        checks,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport<'a> {
    pub spec: &'a ExperimentSpec,
    pub case: &'a CaseReport,
}

/// Per-case headline numbers of a multi-case run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub label: String,
    pub sigma_max_a2: Option<f64>,
    pub status: CheckStatus,
    pub final_log_gap: Vec<(Method, MeanStd)>,
    pub max_du_dx_ratio: Vec<(Method, f64)>,
}

impl From<&CaseReport> for CaseSummary {
    fn from(c: &CaseReport) -> Self {
        CaseSummary {
            label: c.label.clone(),
            sigma_max_a2: c.sigma_max_a2,
            status: c.status,
            final_log_gap: c
                .methods
                .iter()
                .map(|m| (m.method, m.final_log_gap))
                .collect(),
            max_du_dx_ratio: c
                .methods
                .iter()
                .map(|m| (m.method, m.max_du_dx_ratio))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use psc_core::optim::IterRecord;

    fn trace(gaps: &[f64]) -> IterTrace {
        IterTrace {
            method: Method::Gd,
            eta: 0.1,
            beta: 0.0,
            f_star: 0.0,
            records: gaps
                .iter()
                .enumerate()
                .map(|(k, &g)| IterRecord {
                    k,
                    f: g,
                    gap: g,
                    grad1_norm: 0.0,
                    grad2_norm: 0.0,
                    dx: if k == 0 { 0.0 } else { 1.0 },
                    du: if k == 0 { 0.0 } else { k as f64 },
                    dist_x0: 0.0,
                    dist_u0: 0.0,
                    point: None,
                })
                .collect(),
        }
    }

    #[test]
    fn aggregates_ragged_traces() {
        let (a, b) = (trace(&[4.0, 2.0, 1.0]), trace(&[2.0, 1.0]));
        let agg = aggregate(Method::Gd, &[&a, &b]);
        assert_eq!(agg.rows.len(), 3);
        assert_eq!(agg.rows[0].gap.mean, 3.0);
        assert_eq!(agg.rows[2].trials, 1);
        assert_eq!(agg.max_du_dx_ratio, 2.0);
        assert!((agg.final_log_gap.mean - 0.5 * (1f64.ln() + 1f64.ln())).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn std_is_nonnegative_and_mean_bounded(v in prop::collection::vec(-1e6f64..1e6, 1..20)) {
            let s = mean_std(&v);
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.std >= 0.0);
            prop_assert!(s.mean >= lo - 1e-6 && s.mean <= hi + 1e-6);
        }
    }
}
