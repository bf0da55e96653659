//! The JSON experiment description.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use psc_core::additive::{Activation, AdditiveGenSpec};
use psc_core::diagnostics::{Q1Form, RequirementConstants};
use psc_core::optim::DEFAULT_C;
use psc_core::Method;
use serde::{Deserialize, Serialize};

use crate::PscError;

/// `½ xᵀQx − bᵀx` with `Q = U diag(λ) Uᵀ`, `λ` log-spaced over `[1, kappa]`
/// and `U` Haar orthogonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub kappa: f64,
    #[serde(default = "one")]
    pub b_scale: f64,
}

/// Additive instances; one experiment case per entry of `sigma_max_a2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveSpec {
    pub m: usize,
    pub d: usize,
    pub sigma_min_a1: f64,
    pub sigma_max_a1: f64,
    pub sigma_max_a2: Vec<f64>,
    #[serde(default = "one")]
    pub b_scale: f64,
    #[serde(default = "relu")]
    pub activation: Activation,
    /// Draw a fresh instance for every trial instead of one per case.
    #[serde(default)]
    pub instance_per_trial: bool,
}

/// A fully connected ReLU net `[d0, hidden.., d_out]` fit to `n` samples.
/// Every trial draws its own dataset and initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelunetSpec {
    pub n: usize,
    pub d0: usize,
    pub hidden: Vec<usize>,
    pub d_out: usize,
}

impl RelunetSpec {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.d0];
        w.extend(&self.hidden);
        w.push(self.d_out);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Quadratic(QuadraticSpec),
    Additive(AdditiveSpec),
    Relunet(RelunetSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    #[serde(default = "both_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "ten")]
    pub trials: usize,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "milli")]
    pub c1: f64,
    #[serde(default = "milli")]
    pub c2: f64,
    #[serde(default = "one")]
    pub ctilde: f64,
    #[serde(default = "thousand")]
    pub max_iters: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Stop a run once `gap ≤ 1e-12 · gap_0`.
    #[serde(default)]
    pub early_stop: bool,
    /// Fraction of each gap sequence skipped before fitting a rate.
    #[serde(default = "third")]
    pub rate_burn_in_fraction: f64,
    /// Standard deviation of the Gaussian `x_0` (additive and quadratic).
    #[serde(default)]
    pub x0_std: f64,
    /// Standard deviation of the Gaussian `u_0` (additive).
    #[serde(default = "one")]
    pub u0_std: f64,
    #[serde(default)]
    pub q1_form: Q1Form,
}

fn one() -> f64 {
    1.0
}
fn milli() -> f64 {
    1e-3
}
fn third() -> f64 {
    1.0 / 3.0
}
fn default_c() -> f64 {
    DEFAULT_C
}
fn ten() -> usize {
    10
}
fn thousand() -> usize {
    1000
}
fn relu() -> Activation {
    Activation::Relu
}
fn both_methods() -> Vec<Method> {
    vec![Method::Gd, Method::Nesterov]
}

/// One output set of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub index: usize,
    pub label: String,
    pub sigma_max_a2: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> PscError {
    PscError::Spec(msg.into())
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, PscError> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, PscError> {
        let text = std::fs::read_to_string(path).map_err(|source| PscError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn requirement_constants(&self) -> RequirementConstants {
        RequirementConstants {
            c1: self.c1,
            c2: self.c2,
        }
    }

    pub fn validate(&self) -> Result<(), PscError> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods must not be empty"));
        }
        let distinct: BTreeSet<&str> = self.methods.iter().map(|m| m.name()).collect();
        if distinct.len() != self.methods.len() {
            return Err(invalid("methods must not repeat"));
        }
        for (name, v) in [
            ("c", self.c),
            ("c1", self.c1),
            ("c2", self.c2),
            ("ctilde", self.ctilde),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite")));
            }
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.rate_burn_in_fraction) {
            return Err(invalid("rate_burn_in_fraction must lie in [0, 1)"));
        }
        if !(self.x0_std >= 0.0
            && self.x0_std.is_finite()
            && self.u0_std >= 0.0
            && self.u0_std.is_finite())
        {
            return Err(invalid("x0_std and u0_std must be nonnegative and finite"));
        }
        match &self.model {
            ModelSpec::Quadratic(q) => {
                if q.dim == 0 {
                    return Err(invalid("quadratic dim must be at least 1"));
                }
                if !(q.kappa >= 1.0 && q.kappa.is_finite()) {
                    return Err(invalid("quadratic kappa must be at least 1"));
                }
                if !(q.b_scale >= 0.0 && q.b_scale.is_finite()) {
                    return Err(invalid("quadratic b_scale must be nonnegative"));
                }
            }
            ModelSpec::Additive(a) => {
                if a.sigma_max_a2.is_empty() {
                    return Err(invalid("sigma_max_a2 must list at least one value"));
                }
                for &s in &a.sigma_max_a2 {
                    additive_gen_spec(a, s, 0)
                        .validate()
                        .map_err(|e| invalid(e.to_string()))?;
                }
            }
            ModelSpec::Relunet(r) => {
                if r.n == 0
                    || r.d0 == 0
                    || r.d_out == 0
                    || r.hidden.is_empty()
                    || r.hidden.contains(&0)
                {
                    return Err(invalid(
                        "relunet sizes must be positive with at least one hidden layer",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn cases(&self) -> Vec<Case> {
        match &self.model {
            ModelSpec::Additive(a) if a.sigma_max_a2.len() > 1 => a
                .sigma_max_a2
                .iter()
                .enumerate()
                .map(|(index, &s)| Case {
                    index,
                    label: format!("sigma_a2_{s}"),
                    sigma_max_a2: Some(s),
                })
                .collect(),
            ModelSpec::Additive(a) => vec![Case {
                index: 0,
                label: format!("sigma_a2_{}", a.sigma_max_a2[0]),
                sigma_max_a2: Some(a.sigma_max_a2[0]),
            }],
            ModelSpec::Quadratic(_) => vec![Case {
                index: 0,
                label: "quadratic".into(),
                sigma_max_a2: None,
            }],
            ModelSpec::Relunet(_) => vec![Case {
                index: 0,
                label: "relunet".into(),
                sigma_max_a2: None,
            }],
        }
    }

    pub fn has_method(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

pub(crate) fn additive_gen_spec(a: &AdditiveSpec, sigma_max_a2: f64, seed: u64) -> AdditiveGenSpec {
    AdditiveGenSpec {
        m: a.m,
        d: a.d,
        sigma_min_a1: a.sigma_min_a1,
        sigma_max_a1: a.sigma_max_a1,
        sigma_max_a2,
        b_scale: a.b_scale,
        activation: a.activation,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 16}}"#;

    #[test]
    fn defaults_fill_in() {
        let s = ExperimentSpec::from_json(MINIMAL).unwrap();
        assert_eq!(s.trials, 10);
        assert_eq!(s.methods, vec![Method::Gd, Method::Nesterov]);
        assert_eq!(s.c, 1.0 / 64.0);
        assert_eq!(s.max_iters, 1000);
        assert!(s.output_dir.is_none());
    }

    #[test]
    fn round_trips_through_json() {
        let text = r#"{
            "model": {"kind": "additive", "m": 8, "d": 3, "sigma_min_a1": 1.0, "sigma_max_a1": 10.0,
                      "sigma_max_a2": [0.01, 0.3, 5.0], "activation": "tanh"},
            "methods": ["nesterov"], "trials": 3, "c": 0.1234567890123456789, "base_seed": 18446744073709551615,
            "output_dir": "out/x", "q1_form": "square_power"
        }"#;
        let s = ExperimentSpec::from_json(text).unwrap();
        let back = ExperimentSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.cases().len(), 3);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 16}, "trials": 0}"#,
            r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 0.5}}"#,
            r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 16}, "methods": []}"#,
            r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 16}, "methods": ["gd", "gd"]}"#,
            r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 16}, "c": -1}"#,
            r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 16}, "typo": 1}"#,
            r#"{"model": {"kind": "additive", "m": 4, "d": 2, "sigma_min_a1": 2, "sigma_max_a1": 1, "sigma_max_a2": [0.1]}}"#,
            r#"{"model": {"kind": "relunet", "n": 4, "d0": 2, "hidden": [], "d_out": 1}}"#,
            r#"{"model": {"kind": "mystery"}}"#,
        ] {
            assert!(ExperimentSpec::from_json(bad).is_err(), "{bad}");
        }
    }
}
