use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use netform_core::baseline::estimate_leung;
use netform_core::config::Config;
use netform_core::equilibrium::{write_beliefs_csv, Game};
use netform_core::estimate::{first_step, fit};
use netform_core::inference::analytic_variance;
use netform_core::io::{assemble, read_attributes, read_edges, write_attributes, write_edges};
use netform_core::mc;
use netform_core::model::ADistribution;
use netform_core::simulate::{scenario_a_dist, simulate as simulate_data};
use netform_core::Error;
use serde_json::{json, Value};

use crate::EstimatorChoice;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 1,
            Self::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) | Self::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Self::Numerical(e.to_string())
        } else {
            Self::Input(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Input(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn load(path: &Path) -> Result<Config, CliError> {
    let cfg = Config::load(path)?;
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(CliError::Input(format!(
            "invalid config {}:\n  {}",
            path.display(),
            problems.join("\n  ")
        )));
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(value: &Value, path: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn equilibrium(config: &Path, out: &Path, nodes: usize) -> CliResult {
    let cfg = load(config)?;
    let ts = cfg.type_space()?;
    let params = cfg.parameters()?;
    let (n, a_dist) = match &cfg.scenario {
        Some(_) => {
            let spec = cfg.scenario()?;
            (spec.n, scenario_a_dist(&spec, &ts, nodes)?)
        }
        None => (100, ADistribution::point_mass(ts.len(), 0.0)),
    };
    let counts = cfg.type_counts(n)?;
    create_dir(out)?;
    let game = Game::new(&ts, &params, &counts)?;
    match game.solve(&a_dist, &cfg.solver) {
        Ok(eq) => {
            write_beliefs_csv(&eq.beliefs, &ts, create(&out.join("beliefs.csv"))?)?;
            let diag = json!({
                "converged": true,
                "iterations": eq.iterations,
                "residual": eq.residual,
                "damping": eq.damping,
                "distinct_fixed_points": eq.distinct_fixed_points,
                "n": n,
                "type_counts": counts,
            });
            write_json(&diag, Some(&out.join("diagnostics.json")))
        }
        Err(e) => {
            let diag = json!({ "converged": false, "error": e.to_string(), "n": n, "type_counts": counts });
            write_json(&diag, Some(&out.join("diagnostics.json")))?;
            Err(e.into())
        }
    }
}

pub fn simulate(config: &Path, seed: Option<u64>, out: &Path, nodes: usize) -> CliResult {
    let cfg = load(config)?;
    let ts = cfg.type_space()?;
    let mut spec = cfg.scenario()?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = simulate_data(&spec, &ts, &cfg.solver, nodes)?;
    create_dir(out)?;
    write_edges(&data.network, create(&out.join("edges.csv"))?)?;
    write_attributes(&data.population, &ts, create(&out.join("attributes.csv"))?)?;
    log::info!(
        "simulated n = {} with {} links (seed {})",
        spec.n,
        data.network.edge_count(),
        spec.seed
    );
    Ok(())
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn estimate(edges: &Path, attributes: &Path, config: &Path, which: EstimatorChoice, out: Option<&Path>) -> CliResult {
    let cfg = load(config)?;
    let ts = cfg.type_space()?;
    let data = assemble(&read_edges(open(edges)?)?, &read_attributes(open(attributes)?)?, &ts)?;
    let types = &data.types;

    let mut failure: Option<CliError> = None;
    let mut record = |e: CliError| {
        if failure.is_none() {
            failure = Some(e);
        }
    };

    let mut results = Vec::new();
    if matches!(which, EstimatorChoice::Main | EstimatorChoice::Both) {
        let value = match fit(&data.network, types, &ts, &cfg.mle) {
            Ok(f) => {
                let r = &f.result;
                let inference = if r.converged {
                    match analytic_variance(&r.beta_hat, &r.a_hat, &f.regressors, &data.network) {
                        Ok(report) => serde_json::to_value(report).map_err(|e| CliError::Input(e.to_string()))?,
                        Err(e) => json!({ "error": e.to_string() }),
                    }
                } else {
                    record(CliError::Numerical(format!(
                        "estimator did not converge after {} iterations (score {:.3e})",
                        r.iterations, r.score_norm
                    )));
                    json!({ "error": "estimate did not converge" })
                };
                json!({
                    "estimator": "main",
                    "beta_hat": r.beta_hat,
                    "a_hat": r.a_hat,
                    "agent_ids": data.agent_ids,
                    "inference": inference,
                    "diagnostics": {
                        "converged": r.converged,
                        "iterations": r.iterations,
                        "loglik": r.loglik,
                        "score_norm": r.score_norm,
                        "hessian_rank": r.hessian_rank,
                        "boundary_agents": r.boundary_agents,
                    },
                })
            }
            Err(e) => {
                let v = json!({ "estimator": "main", "error": e.to_string() });
                record(e.into());
                v
            }
        };
        results.push(value);
    }
    if matches!(which, EstimatorChoice::Leung | EstimatorChoice::Both) {
        let value = match first_step(&data.network, types, ts.len()).and_then(|(q, _)| estimate_leung(&data.network, types, &ts, &q)) {
            Ok(l) => json!({
                "estimator": "leung",
                "beta_hat": l.beta_hat,
                "intercept": l.intercept,
                "diagnostics": {
                    "converged": true,
                    "iterations": l.iterations,
                    "loglik": l.loglik,
                    "score_norm": l.score_norm,
                },
            }),
            Err(e) => {
                let v = json!({ "estimator": "leung", "error": e.to_string() });
                record(e.into());
                v
            }
        };
        results.push(value);
    }

    let doc = if results.len() == 1 {
        results.pop().unwrap_or_default()
    } else {
        json!({ "estimator": "both", "results": results })
    };
    write_json(&doc, out)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn mc(config: &Path, workers: Option<usize>, seed: Option<u64>, out: &Path, nodes: usize) -> CliResult {
    let cfg = load(config)?;
    let mut mc_cfg = cfg.mc(nodes)?;
    if let Some(w) = workers {
        mc_cfg.parallel_workers = w;
    }
    if let Some(s) = seed {
        mc_cfg.base_seed = s;
    }
    let rows = mc::run(&mc_cfg)?;
    let summary = mc::summarize(&rows);
    mc::write_outputs(&mc_cfg, &rows, &summary, out).map_err(|e| CliError::Input(format!("cannot write outputs: {e}")))?;
    Ok(())
}
