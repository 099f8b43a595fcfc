//! JSON run configuration with sections
//! `{parameters, type_space, scenario, solver, mle, mc}`. Unknown keys are
//! rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::SolverConfig;
use crate::error::{Error, Result};
use crate::estimate::MleConfig;
use crate::mc::{EstimatorKind, McConfig};
use crate::model::{Parameters, TypeSpace, DEFAULT_A_BOUNDS};
use crate::simulate::ScenarioSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub parameters: Option<ParametersSection>,
    #[serde(default)]
    pub type_space: Option<TypeSpaceSection>,
    #[serde(default)]
    pub scenario: Option<ScenarioSection>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mle: MleConfig,
    #[serde(default)]
    pub mc: Option<McSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametersSection {
    pub beta: Vec<f64>,
    #[serde(default = "default_bounds")]
    pub a_bounds: (f64, f64),
}

fn default_bounds() -> (f64, f64) {
    DEFAULT_A_BOUNDS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpaceSection {
    pub support: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// `T x T` table of regressor vectors; `|x_s - x_t|` when absent.
    #[serde(default)]
    pub w: Option<Vec<Vec<Vec<f64>>>>,
}

/// A preset design (1, 2 or 3) with optional overrides, or a fully explicit
/// one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub preset: Option<u8>,
    pub label: Option<String>,
    pub alpha_l: Option<f64>,
    pub alpha_h: Option<f64>,
    pub gamma: Option<f64>,
    pub var_a: Option<f64>,
    pub var_v: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    /// Realized type counts for the equilibrium command; a largest-remainder
    /// split of `n` by the type probabilities when absent.
    pub type_counts: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_workers")]
    pub parallel_workers: usize,
    #[serde(default = "default_true")]
    pub standard_errors: bool,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Main, EstimatorKind::Leung]
}

fn default_workers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn type_space(&self) -> Result<TypeSpace> {
        let Some(sec) = &self.type_space else {
            return Ok(TypeSpace::binary());
        };
        let mut bad = Vec::new();
        if sec.support.is_empty() {
            bad.push("type_space.support is empty".to_string());
        }
        if sec.support.len() != sec.probabilities.len() {
            bad.push(format!(
                "type_space.probabilities has {} entries for {} support points",
                sec.probabilities.len(),
                sec.support.len()
            ));
        }
        let total: f64 = sec.probabilities.iter().sum();
        if sec.probabilities.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            bad.push(format!("type_space.probabilities must be a simplex (sum {total})"));
        }
        if !bad.is_empty() {
            return Err(Error::InvalidInput(bad.join("; ")));
        }
        match &sec.w {
            Some(table) => TypeSpace::new(sec.support.clone(), sec.probabilities.clone(), table),
            None => Ok(TypeSpace::abs_diff(sec.support.clone(), sec.probabilities.clone())),
        }
    }

    /// Structural parameters; the scenario preset's when the section is absent.
    pub fn parameters(&self) -> Result<Parameters> {
        let ts = self.type_space()?;
        let params = match &self.parameters {
            Some(p) => Parameters {
                beta: p.beta.clone(),
                a_bounds: p.a_bounds,
            },
            None => Parameters::new(vec![-2.0, 1.0, 1.0]),
        };
        let mut bad = Vec::new();
        if params.beta.len() != ts.w_dim + 2 {
            bad.push(format!(
                "parameters.beta has length {}, expected {}",
                params.beta.len(),
                ts.w_dim + 2
            ));
        }
        if params.beta.iter().any(|b| !b.is_finite()) {
            bad.push("parameters.beta must be finite".into());
        }
        let (lo, hi) = params.a_bounds;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            bad.push(format!("parameters.a_bounds ({lo}, {hi}) must satisfy A_min < A_max"));
        }
        if bad.is_empty() {
            Ok(params)
        } else {
            Err(Error::InvalidInput(bad.join("; ")))
        }
    }

    pub fn scenario(&self) -> Result<ScenarioSpec> {
        let sec = self
            .scenario
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("missing `scenario` section".into()))?;
        let params = self.parameters()?;
        let n = sec.n.unwrap_or(100);
        let seed = sec.seed.unwrap_or(0);
        let mut spec = match sec.preset {
            Some(k) => ScenarioSpec::by_number(k, n, seed)
                .ok_or_else(|| Error::InvalidInput(format!("scenario.preset must be 1, 2 or 3, got {k}")))?,
            None => {
                let missing: Vec<&str> = [
                    ("alpha_l", sec.alpha_l.is_none()),
                    ("alpha_h", sec.alpha_h.is_none()),
                    ("gamma", sec.gamma.is_none()),
                    ("var_a", sec.var_a.is_none()),
                    ("var_v", sec.var_v.is_none()),
                ]
                .iter()
                .filter(|(_, m)| *m)
                .map(|(k, _)| *k)
                .collect();
                if !missing.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "scenario without preset is missing: {}",
                        missing.join(", ")
                    )));
                }
                ScenarioSpec::scenario_3(n, seed)
            }
        };
        spec.params = params;
        if let Some(v) = &sec.label {
            spec.label = v.clone();
        }
        spec.alpha_l = sec.alpha_l.unwrap_or(spec.alpha_l);
        spec.alpha_h = sec.alpha_h.unwrap_or(spec.alpha_h);
        spec.gamma = sec.gamma.unwrap_or(spec.gamma);
        spec.var_a = sec.var_a.unwrap_or(spec.var_a);
        spec.var_v = sec.var_v.unwrap_or(spec.var_v);
        if sec.preset.is_none() && sec.label.is_none() {
            spec.label = "custom".into();
        }
        spec.check()?;
        Ok(spec)
    }

    /// Type counts for a population of `n` agents: explicit, or `n p_t`
    /// rounded by largest remainder.
    pub fn type_counts(&self, n: usize) -> Result<Vec<usize>> {
        let ts = self.type_space()?;
        if let Some(counts) = self.scenario.as_ref().and_then(|s| s.type_counts.clone()) {
            if counts.len() != ts.len() || counts.iter().sum::<usize>() != n {
                return Err(Error::InvalidInput(format!(
                    "scenario.type_counts {counts:?} must have {} entries summing to n = {n}",
                    ts.len()
                )));
            }
            return Ok(counts);
        }
        Ok(largest_remainder(n, &ts.probabilities))
    }

    pub fn mc(&self, quadrature_nodes: usize) -> Result<McConfig> {
        let sec = self
            .mc
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("missing `mc` section".into()))?;
        let config = McConfig {
            scenario: self.scenario()?,
            type_space: self.type_space()?,
            solver: self.solver.clone(),
            mle: self.mle.clone(),
            quadrature_nodes,
            n_list: sec.n_list.clone(),
            replications: sec.replications,
            base_seed: sec.base_seed,
            estimators: sec.estimators.clone(),
            parallel_workers: sec.parallel_workers,
            standard_errors: sec.standard_errors,
        };
        config.check()?;
        Ok(config)
    }

    /// Every section that is present, checked together; the messages name the
    /// offending fields.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                out.push(e.to_string());
            }
        };
        push(self.type_space().map(|_| ()));
        push(self.parameters().map(|_| ()));
        if self.scenario.is_some() {
            push(self.scenario().map(|_| ()));
        }
        push(self.solver.check());
        push(self.mle.check());
        if self.mc.is_some() {
            push(self.mc(15).map(|_| ()));
        }
        out.dedup();
        out
    }
}

pub fn largest_remainder(n: usize, probabilities: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = probabilities.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let left = n.saturating_sub(counts.iter().sum());
    for &k in order.iter().take(left) {
        counts[k] += 1;
    }
    counts
}
