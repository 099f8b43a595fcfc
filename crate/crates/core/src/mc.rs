//! Monte Carlo harness: seeded replications, failure accounting, and
//! quantile-based summaries.
//!
//! Every replication draws its own seed from `(base_seed, n, replication)`,
//! so results do not depend on how replications are spread over workers.
//! Wall-clock timings are kept apart from the raw results so the results file
//! is byte-reproducible.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::estimate_leung;
use crate::equilibrium::SolverConfig;
use crate::error::{Error, Result};
use crate::estimate::{first_step, fit, MleConfig};
use crate::inference::{analytic_variance, VarianceReport, MC_EMPIRICAL};
use crate::model::TypeSpace;
use crate::simulate::{replication_seed, simulate, ScenarioSpec};

/// `z_{0.95}` of the standard normal.
pub const Z95: f64 = 1.644_853_626_951_472_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Main,
    Leung,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Main => "main",
            Self::Leung => "leung",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McConfig {
    /// Design template; `n` and `seed` are set per replication.
    pub scenario: ScenarioSpec,
    pub type_space: TypeSpace,
    pub solver: SolverConfig,
    pub mle: MleConfig,
    pub quadrature_nodes: usize,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// Not echoed in the manifest: outputs must not depend on it.
    #[serde(skip)]
    pub parallel_workers: usize,
    /// Compute plug-in standard errors for the main estimator.
    pub standard_errors: bool,
}

impl McConfig {
    pub fn new(scenario: ScenarioSpec, n_list: Vec<usize>, replications: usize, base_seed: u64) -> Self {
        Self {
            scenario,
            type_space: TypeSpace::binary(),
            solver: SolverConfig::default(),
            mle: MleConfig::default(),
            quadrature_nodes: 15,
            n_list,
            replications,
            base_seed,
            estimators: vec![EstimatorKind::Main, EstimatorKind::Leung],
            parallel_workers: 1,
            standard_errors: true,
        }
    }

    pub fn check(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.replications == 0 {
            bad.push("mc.replications must be >= 1".to_string());
        }
        if self.n_list.is_empty() {
            bad.push("mc.n_list is empty".into());
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 3) {
            bad.push(format!("mc.n_list entry {n} < 3"));
        }
        if self.estimators.is_empty() {
            bad.push("mc.estimators is empty".into());
        }
        if self.parallel_workers == 0 {
            bad.push("mc.parallel_workers must be >= 1".into());
        }
        if self.quadrature_nodes == 0 {
            bad.push("quadrature nodes must be >= 1".into());
        }
        if let Err(e) = self.solver.check().and(self.mle.check()).and(self.scenario.check()) {
            bad.push(e.to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(bad.join("; ")))
        }
    }

    fn dim(&self) -> usize {
        self.scenario.params.beta.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NotConverged,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ok => "ok",
            Self::NotConverged => "not_converged",
            Self::Failed => "failed",
        })
    }
}

/// One estimator on one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub scenario: String,
    pub status: Status,
    pub iterations: Option<usize>,
    pub hessian_rank: Option<usize>,
    pub boundary_agents: Option<usize>,
    pub beta: Vec<f64>,
    pub intercept: Option<f64>,
    pub se: Option<Vec<f64>>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl RawRow {
    fn failed(estimator: EstimatorKind, n: usize, replication: usize, seed: u64, scenario: &str, error: String) -> Self {
        Self {
            estimator,
            n,
            replication,
            seed,
            scenario: scenario.to_string(),
            status: Status::Failed,
            iterations: None,
            hessian_rank: None,
            boundary_agents: None,
            beta: Vec::new(),
            intercept: None,
            se: None,
            error: Some(error),
            seconds: 0.0,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status == Status::Ok
    }
}

fn replicate(config: &McConfig, n: usize, rep: usize) -> Vec<RawRow> {
    let seed = replication_seed(config.base_seed, n, rep);
    let spec = ScenarioSpec {
        n,
        seed,
        ..config.scenario.clone()
    };
    let label = spec.label.as_str();
    let ts = &config.type_space;
    let data = match simulate(&spec, ts, &config.solver, config.quadrature_nodes) {
        Ok(d) => d,
        Err(e) => {
            return config
                .estimators
                .iter()
                .map(|&k| RawRow::failed(k, n, rep, seed, label, format!("simulation: {e}")))
                .collect();
        }
    };
    let types = &data.population.types;
    let mut rows = Vec::with_capacity(config.estimators.len());
    for &kind in &config.estimators {
        let started = Instant::now();
        let mut row = match kind {
            EstimatorKind::Main => match fit(&data.network, types, ts, &config.mle) {
                Ok(f) => {
                    let r = &f.result;
                    let se = if config.standard_errors && r.converged {
                        analytic_variance(&r.beta_hat, &r.a_hat, &f.regressors, &data.network)
                            .map(|v| v.se)
                            .ok()
                    } else {
                        None
                    };
                    RawRow {
                        estimator: kind,
                        n,
                        replication: rep,
                        seed,
                        scenario: label.to_string(),
                        status: if r.converged { Status::Ok } else { Status::NotConverged },
                        iterations: Some(r.iterations),
                        hessian_rank: Some(r.hessian_rank),
                        boundary_agents: Some(r.boundary_agents.len()),
                        beta: r.beta_hat.clone(),
                        intercept: None,
                        se,
                        error: None,
                        seconds: 0.0,
                    }
                }
                Err(e) => RawRow::failed(kind, n, rep, seed, label, e.to_string()),
            },
            EstimatorKind::Leung => {
                match first_step(&data.network, types, ts.len()).and_then(|(q, _)| estimate_leung(&data.network, types, ts, &q)) {
                    Ok(l) => RawRow {
                        estimator: kind,
                        n,
                        replication: rep,
                        seed,
                        scenario: label.to_string(),
                        status: Status::Ok,
                        iterations: Some(l.iterations),
                        hessian_rank: None,
                        boundary_agents: None,
                        beta: l.beta_hat,
                        intercept: Some(l.intercept),
                        se: None,
                        error: None,
                        seconds: 0.0,
                    },
                    Err(e) => RawRow::failed(kind, n, rep, seed, label, e.to_string()),
                }
            }
        };
        row.seconds = started.elapsed().as_secs_f64();
        rows.push(row);
    }
    rows
}

/// All replications for every `n` in `n_list`, ordered by `(n, replication,
/// estimator)` regardless of the worker count.
pub fn run(config: &McConfig) -> Result<Vec<RawRow>> {
    config.check()?;
    let jobs: Vec<(usize, usize)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |rep| (n, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel_workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    let nested: Vec<Vec<RawRow>> = pool.install(|| jobs.par_iter().map(|&(n, rep)| replicate(config, n, rep)).collect());
    let rows: Vec<RawRow> = nested.into_iter().flatten().collect();
    let failures = rows.iter().filter(|r| !r.succeeded()).count();
    if failures > 0 {
        log::info!("{failures} of {} estimator runs did not succeed", rows.len());
    }
    Ok(rows)
}

/// Linear interpolation between order statistics (`(m - 1) p` positions).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(Q_0.95 - Q_0.05) / (2 z_0.95)`: the standard deviation of a normal law
/// with the same 90% range.
pub fn quantile_sd(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    ((quantile(&v, 0.95) - quantile(&v, 0.05)) / (2.0 * Z95)).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub estimator: EstimatorKind,
    pub n: usize,
    /// 1-based coefficient index.
    pub coordinate: usize,
    /// Absent with fewer than two successful replications.
    pub mean: Option<f64>,
    pub quantile_sd: Option<f64>,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub cells: Vec<SummaryCell>,
}

impl McSummary {
    pub fn get(&self, estimator: EstimatorKind, n: usize, coordinate: usize) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.n == n && c.coordinate == coordinate)
    }

    pub fn means(&self, estimator: EstimatorKind, n: usize) -> Option<Vec<f64>> {
        self.cells
            .iter()
            .filter(|c| c.estimator == estimator && c.n == n)
            .map(|c| c.mean)
            .collect()
    }
}

/// Per-coordinate estimates, replication count and failure count.
type Columns = (Vec<Vec<f64>>, usize, usize);

/// Successful estimates per `(estimator, n)`, sorted within each coordinate
/// so the result does not depend on replication order.
fn sorted_columns(rows: &[RawRow]) -> BTreeMap<(EstimatorKind, usize), Columns> {
    let mut groups: BTreeMap<(EstimatorKind, usize), Columns> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry((r.estimator, r.n)).or_default();
        entry.1 += 1;
        if !r.succeeded() {
            entry.2 += 1;
            continue;
        }
        if entry.0.len() < r.beta.len() {
            entry.0.resize(r.beta.len(), Vec::new());
        }
        for (k, &b) in r.beta.iter().enumerate() {
            entry.0[k].push(b);
        }
    }
    for (cols, _, _) in groups.values_mut() {
        cols.iter_mut().for_each(|c| c.sort_by(f64::total_cmp));
    }
    groups
}

pub fn summarize(rows: &[RawRow]) -> McSummary {
    let mut cells = Vec::new();
    for ((estimator, n), (cols, total, failures)) in sorted_columns(rows) {
        let dim = rows
            .iter()
            .filter(|r| r.estimator == estimator && r.n == n)
            .map(|r| r.beta.len())
            .max()
            .unwrap_or(0)
            .max(cols.len());
        for k in 0..dim {
            let col = cols.get(k).map(Vec::as_slice).unwrap_or(&[]);
            let present = col.len() >= 2;
            cells.push(SummaryCell {
                estimator,
                n,
                coordinate: k + 1,
                mean: present.then(|| col.iter().sum::<f64>() / col.len() as f64),
                quantile_sd: present.then(|| quantile_sd(col)),
                replications: total,
                failures,
            });
        }
    }
    McSummary { cells }
}

/// Standard deviation of the successful estimates for one `(estimator, n)`.
pub fn empirical_variance(rows: &[RawRow], estimator: EstimatorKind, n: usize) -> Option<VarianceReport> {
    let groups = sorted_columns(rows);
    let (cols, _, _) = groups.get(&(estimator, n))?;
    if cols.is_empty() || cols[0].len() < 2 {
        return None;
    }
    let se = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64).sqrt()
        })
        .collect();
    Some(VarianceReport {
        i0_hat: Vec::new(),
        omega_hat: Vec::new(),
        se,
        method: MC_EMPIRICAL.to_string(),
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_raw_csv<W: Write>(rows: &[RawRow], dim: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "estimator",
        "n",
        "replication",
        "seed",
        "scenario",
        "status",
        "iterations",
        "hessian_rank",
        "boundary_agents",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=dim).map(|k| format!("beta_{k}")));
    header.push("intercept".into());
    header.extend((1..=dim).map(|k| format!("se_{k}")));
    header.push("error".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.estimator.to_string(),
            r.n.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            r.scenario.clone(),
            r.status.to_string(),
            opt(r.iterations),
            opt(r.hessian_rank),
            opt(r.boundary_agents),
        ];
        rec.extend((0..dim).map(|k| opt(r.beta.get(k))));
        rec.push(opt(r.intercept));
        rec.extend((0..dim).map(|k| opt(r.se.as_ref().and_then(|s| s.get(k)))));
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(rows: &[RawRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "n", "replication", "seconds"])?;
    for r in rows {
        w.write_record([
            r.estimator.to_string(),
            r.n.to_string(),
            r.replication.to_string(),
            r.seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &McSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "n", "coordinate", "mean", "quantile_sd", "failures"])?;
    for c in &summary.cells {
        w.write_record([
            c.estimator.to_string(),
            c.n.to_string(),
            format!("beta_{}", c.coordinate),
            opt(c.mean),
            opt(c.quantile_sd),
            c.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Raw, summary and timing CSVs plus a manifest with the config echo and
/// SHA-256 hashes of the reproducible artifacts.
pub fn write_outputs(config: &McConfig, rows: &[RawRow], summary: &McSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut raw = Vec::new();
    write_raw_csv(rows, config.dim(), &mut raw)?;
    let mut sum = Vec::new();
    write_summary_csv(summary, &mut sum)?;
    std::fs::write(dir.join("raw.csv"), &raw)?;
    std::fs::write(dir.join("summary.csv"), &sum)?;
    write_timings_csv(rows, std::fs::File::create(dir.join("timings.csv"))?)?;

    let manifest = serde_json::json!({
        "config": config,
        "artifacts": {
            "raw.csv": hex::encode(Sha256::digest(&raw)),
            "summary.csv": hex::encode(Sha256::digest(&sum)),
        },
        "unhashed": ["timings.csv"],
        "runs": rows.len(),
        "failures": rows.iter().filter(|r| !r.succeeded()).count(),
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
