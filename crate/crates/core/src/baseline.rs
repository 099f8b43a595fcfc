//! Pooled two-step logit that ignores the fixed effects, with a common
//! intercept. Used as the benchmark in the Monte Carlo comparison.
//!
//! The regressors only vary with the ordered type pair, so the pooled
//! likelihood is a binomial likelihood over type-pair cells.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{build_regressors, first_step, sup_norm};
use crate::model::{log_logistic, logistic, BeliefMatrix, Network, TypeSpace};

pub const SCORE_TOLERANCE: f64 = 1e-12;
/// Accepted score when the line search can no longer improve the likelihood.
pub const STALL_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 200;
/// With a boundary cell, coefficients beyond this size mean the likelihood
/// has no finite maximum.
const DIVERGENCE_BOUND: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeungResult {
    /// Coefficients aligned with `beta`.
    pub beta_hat: Vec<f64>,
    pub intercept: f64,
    pub loglik: f64,
    pub iterations: usize,
    /// Sup-norm of the pair-averaged score at the estimate.
    pub score_norm: f64,
}

struct Cell {
    x: Vec<f64>,
    trials: f64,
    successes: f64,
}

fn cells(network: &Network, types: &[usize], type_space: &TypeSpace, q_hat: &BeliefMatrix) -> Result<Vec<Cell>> {
    let (_, pairs) = first_step(network, types, type_space.len())?;
    let reg = build_regressors(q_hat, types, type_space)?;
    let nt = type_space.len();
    let mut links = vec![0usize; nt * nt];
    for (i, j) in network.edges() {
        links[types[i] * nt + types[j]] += 1;
    }
    let mut out = Vec::with_capacity(nt * nt);
    for s in 0..nt {
        for t in 0..nt {
            let mut x = Vec::with_capacity(reg.dim() + 1);
            x.push(1.0);
            x.extend_from_slice(reg.z(s, t));
            out.push(Cell {
                x,
                trials: pairs[s][t] as f64,
                successes: links[s * nt + t] as f64,
            });
        }
    }
    Ok(out)
}

fn loglik(cells: &[Cell], theta: &[f64]) -> f64 {
    cells
        .iter()
        .map(|c| {
            let eta: f64 = c.x.iter().zip(theta).map(|(x, b)| x * b).sum();
            c.successes * log_logistic(eta) + (c.trials - c.successes) * log_logistic(-eta)
        })
        .sum()
}

fn score_and_hessian(cells: &[Cell], theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let k = theta.len();
    let mut g = DVector::zeros(k);
    let mut h = DMatrix::zeros(k, k);
    for c in cells {
        let eta: f64 = c.x.iter().zip(theta).map(|(x, b)| x * b).sum();
        let p = logistic(eta);
        let x = DVector::from_column_slice(&c.x);
        g += &x * (c.successes - c.trials * p);
        h -= &x * x.transpose() * (c.trials * p * (1.0 - p));
    }
    (g, h)
}

fn finished(theta: &[f64], loglik: f64, iterations: usize, score_norm: f64) -> LeungResult {
    LeungResult {
        beta_hat: theta[1..].to_vec(),
        intercept: theta[0],
        loglik,
        iterations,
        score_norm,
    }
}

/// Pooled logit of `G_ij` on `(1, Z_ij)` with the regressors built from
/// `q_hat`, maximized by Newton with step halving.
pub fn estimate_leung(network: &Network, types: &[usize], type_space: &TypeSpace, q_hat: &BeliefMatrix) -> Result<LeungResult> {
    let cells = cells(network, types, type_space, q_hat)?;
    let k = cells[0].x.len();
    let n = network.n() as f64;
    let norm = n * (n - 1.0);

    // With every cell strictly between 0 and 1 the likelihood is coercive, so
    // a finite maximizer exists whenever the design has full rank.
    let interior = cells.iter().all(|c| c.successes > 0.0 && c.successes < c.trials);

    let mut theta = vec![0.0; k];
    let mut ll = loglik(&cells, &theta);
    let mut score_norm = f64::INFINITY;
    for iteration in 0..=MAX_ITERATIONS {
        let (g, h) = score_and_hessian(&cells, &theta);
        score_norm = sup_norm(g.as_slice()) / norm;
        if score_norm <= SCORE_TOLERANCE {
            return Ok(finished(&theta, ll / norm, iteration, score_norm));
        }
        if !interior && theta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
            break;
        }
        let Some(chol) = (-h).cholesky() else {
            if !interior {
                break;
            }
            return Err(Error::SingularMatrix("pooled logit design is rank deficient".into()));
        };
        let step = chol.solve(&g);
        let mut scale = 1.0;
        let mut accepted = false;
        // gains below this are rounding noise in the summed likelihood
        let noise = 16.0 * f64::EPSILON * ll.abs();
        for _ in 0..40 {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let trial_ll = loglik(&cells, &trial);
            let better = trial_ll.is_finite()
                && (trial_ll > ll + noise
                    || (trial_ll >= ll - noise
                        && sup_norm(score_and_hessian(&cells, &trial).0.as_slice()) / norm < score_norm));
            if better {
                theta = trial;
                ll = trial_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            if score_norm <= STALL_TOLERANCE {
                return Ok(finished(&theta, ll / norm, iteration, score_norm));
            }
            break;
        }
    }
    if interior {
        return Err(Error::NoConvergence {
            what: "pooled logit",
            iterations: MAX_ITERATIONS,
            residual: score_norm,
        });
    }
    Err(Error::Separation(format!(
        "pooled logit has no finite maximizer (coefficients {theta:?})"
    )))
}
