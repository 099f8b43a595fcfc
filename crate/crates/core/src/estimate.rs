//! Two-step estimator: empirical link frequencies per ordered type pair, then
//! joint maximum likelihood of `(beta, A)` with the fixed effects
//! concentrated out.
//!
//! Regressors depend on the ordered type pair only, so every likelihood
//! quantity reduces to per-agent, per-target-type link counts. Sums over
//! `j != i` are therefore evaluated as sums over target types weighted by the
//! number of eligible targets, `m_t - 1{t = s_i}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::equilibrium::popularity_average;
use crate::error::{Error, Result};
use crate::model::{
    log_logistic, logistic, type_histogram, BeliefMatrix, EstimateResult, Network, TypeSpace, DEFAULT_A_BOUNDS,
};

/// Eigenvalues of `-H` below this fraction of the largest are treated as
/// unidentified directions.
pub const RANK_TOLERANCE: f64 = 1e-10;

const MAX_HALVINGS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleConfig {
    pub a_tolerance: f64,
    pub a_max_iterations: usize,
    /// Sup-norm threshold on the concentrated score.
    pub beta_tolerance: f64,
    pub beta_max_iterations: usize,
    /// Starting coefficients; zeros when absent.
    pub beta_init: Option<Vec<f64>>,
    pub a_bounds: (f64, f64),
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            a_tolerance: 1e-10,
            a_max_iterations: 500,
            beta_tolerance: 1e-9,
            beta_max_iterations: 100,
            beta_init: None,
            a_bounds: DEFAULT_A_BOUNDS,
        }
    }
}

impl MleConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.a_tolerance > 0.0 && self.beta_tolerance > 0.0) {
            return Err(Error::InvalidInput("mle tolerances must be > 0".into()));
        }
        if !(self.a_bounds.0 < self.a_bounds.1) || !self.a_bounds.0.is_finite() || !self.a_bounds.1.is_finite() {
            return Err(Error::InvalidInput("mle.a_bounds must be finite with A_min < A_max".into()));
        }
        Ok(())
    }
}

/// Ordered-pair counts per `(s, t)` cell.
pub type PairCounts = Vec<Vec<usize>>;

/// Link frequency and ordered-pair count per `(s, t)` cell; `None` where the
/// cell has no ordered pairs.
pub fn pair_frequencies(network: &Network, types: &[usize], n_types: usize) -> Result<(Vec<Vec<Option<f64>>>, PairCounts)> {
    let n = network.n();
    if types.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} type labels for a network of {n} agents",
            types.len()
        )));
    }
    let counts = type_histogram(types, n_types)?;
    let mut links = vec![vec![0usize; n_types]; n_types];
    for (i, j) in network.edges() {
        links[types[i]][types[j]] += 1;
    }
    let pairs: PairCounts = (0..n_types)
        .map(|s| {
            (0..n_types)
                .map(|t| counts[s] * counts[t] - if s == t { counts[s] } else { 0 })
                .collect()
        })
        .collect();
    let freq = (0..n_types)
        .map(|s| {
            (0..n_types)
                .map(|t| (pairs[s][t] > 0).then(|| links[s][t] as f64 / pairs[s][t] as f64))
                .collect()
        })
        .collect();
    Ok((freq, pairs))
}

/// Empirical frequency with which type-`s` agents propose to type-`t` agents.
pub fn first_step(network: &Network, types: &[usize], n_types: usize) -> Result<(BeliefMatrix, PairCounts)> {
    let (freq, pairs) = pair_frequencies(network, types, n_types)?;
    let mut q = BeliefMatrix::filled(n_types, 0.0);
    for (s, row) in freq.iter().enumerate() {
        for (t, f) in row.iter().enumerate() {
            q[(s, t)] = f.ok_or(Error::TypePairUnobserved { s, t })?;
        }
    }
    Ok((q, pairs))
}

/// `Z_ij = (w(x_{t_i}, x_{t_j}), q[t_j][t_i], popularity average)`, stored
/// once per ordered type pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorSet {
    n: usize,
    d: usize,
    types: Vec<usize>,
    counts: Vec<usize>,
    beliefs: BeliefMatrix,
    z: Vec<f64>,
}

pub fn build_regressors(q: &BeliefMatrix, types: &[usize], type_space: &TypeSpace) -> Result<RegressorSet> {
    let n = types.len();
    let n_types = type_space.len();
    if q.types() != n_types {
        return Err(Error::InvalidInput(format!(
            "belief matrix has {} types, type space {}",
            q.types(),
            n_types
        )));
    }
    if n < 3 {
        return Err(Error::PopularityUndefined { n });
    }
    let counts = type_histogram(types, n_types)?;
    let d = type_space.w_dim + 2;
    let mut z = Vec::with_capacity(n_types * n_types * d);
    for s in 0..n_types {
        for t in 0..n_types {
            z.extend_from_slice(type_space.w(s, t));
            z.push(q[(t, s)]);
            z.push(popularity_average(q, &counts, n, s, t));
        }
    }
    Ok(RegressorSet {
        n,
        d,
        types: types.to_vec(),
        counts,
        beliefs: q.clone(),
        z,
    })
}

impl RegressorSet {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Length of `Z_ij` (and of `beta`).
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_types(&self) -> usize {
        self.counts.len()
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn beliefs(&self) -> &BeliefMatrix {
        &self.beliefs
    }

    #[inline]
    pub fn z(&self, s: usize, t: usize) -> &[f64] {
        let start = (s * self.n_types() + t) * self.d;
        &self.z[start..start + self.d]
    }

    #[inline]
    pub fn z_ij(&self, i: usize, j: usize) -> &[f64] {
        self.z(self.types[i], self.types[j])
    }

    /// Number of targets of type `t` available to agent `i`.
    #[inline]
    pub fn trials(&self, i: usize, t: usize) -> usize {
        self.counts[t] - usize::from(self.types[i] == t)
    }

    /// `z_st' beta` for every ordered type pair.
    pub fn index_table(&self, beta: &[f64]) -> Vec<f64> {
        self.z.chunks(self.d).map(|z| dot(z, beta)).collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-agent link counts toward each target type.
#[derive(Clone, Debug)]
struct LinkCounts {
    n_types: usize,
    links: Vec<usize>,
    out_degree: Vec<usize>,
}

impl LinkCounts {
    fn new(regressors: &RegressorSet, network: &Network) -> Result<Self> {
        let n = regressors.n();
        if network.n() != n {
            return Err(Error::InvalidInput(format!(
                "network has {} agents, regressors {n}",
                network.n()
            )));
        }
        let n_types = regressors.n_types();
        let mut links = vec![0usize; n * n_types];
        for (i, j) in network.edges() {
            links[i * n_types + regressors.types[j]] += 1;
        }
        let out_degree = (0..n)
            .map(|i| links[i * n_types..(i + 1) * n_types].iter().sum())
            .collect();
        Ok(Self {
            n_types,
            links,
            out_degree,
        })
    }

    #[inline]
    fn get(&self, i: usize, t: usize) -> usize {
        self.links[i * self.n_types + t]
    }
}

/// Fixed effects concentrated out at a given `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct AHat {
    pub a: Vec<f64>,
    /// Degenerate out-degree or estimate on `a_bounds`.
    pub boundary_agents: Vec<usize>,
    /// Agents whose fixed effect does not respond to `beta`.
    pub pinned: Vec<bool>,
    /// Largest number of sweeps any agent needed.
    pub sweeps: usize,
}

/// The likelihood for one dataset, with everything that does not depend on
/// `(beta, A)` precomputed.
#[derive(Clone, Debug)]
pub struct ConcentratedLikelihood<'a> {
    reg: &'a RegressorSet,
    links: LinkCounts,
    config: MleConfig,
}

impl<'a> ConcentratedLikelihood<'a> {
    pub fn new(regressors: &'a RegressorSet, network: &Network, config: &MleConfig) -> Result<Self> {
        config.check()?;
        Ok(Self {
            reg: regressors,
            links: LinkCounts::new(regressors, network)?,
            config: config.clone(),
        })
    }

    pub fn regressors(&self) -> &RegressorSet {
        self.reg
    }

    pub fn config(&self) -> &MleConfig {
        &self.config
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.reg.dim() {
            return Err(Error::InvalidInput(format!(
                "beta has length {}, regressors {}",
                beta.len(),
                self.reg.dim()
            )));
        }
        Ok(())
    }

    fn pair_norm(&self) -> f64 {
        let n = self.reg.n() as f64;
        n * (n - 1.0)
    }

    /// Average Bernoulli log-likelihood over all ordered pairs.
    pub fn loglik(&self, beta: &[f64], a: &[f64]) -> f64 {
        let u = self.reg.index_table(beta);
        let nt = self.reg.n_types();
        let mut total = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            let s = self.reg.types[i];
            for t in 0..nt {
                let c = self.reg.trials(i, t);
                if c == 0 {
                    continue;
                }
                let k = self.links.get(i, t) as f64;
                let eta = u[s * nt + t] + ai;
                total += k * log_logistic(eta) + (c as f64 - k) * log_logistic(-eta);
            }
        }
        total / self.pair_norm()
    }

    /// Solves the per-agent fixed point
    /// `A_i = ln sum_j G_ij - ln sum_j exp(z_ij'b) / (1 + exp(z_ij'b + A_i))`
    /// by repeated substitution, projecting onto `a_bounds`.
    ///
    /// Agents with out-degree 0 or `n - 1` get the corresponding bound.
    pub fn fixed_point_a(&self, beta: &[f64], warm: Option<&[f64]>) -> Result<AHat> {
        self.check_beta(beta)?;
        let n = self.reg.n();
        let nt = self.reg.n_types();
        let (lo, hi) = self.config.a_bounds;
        let u = self.reg.index_table(beta);
        let mut a = vec![0.0; n];
        let mut pinned = vec![false; n];
        let mut boundary = Vec::new();
        let mut sweeps = 0usize;
        let mut worst: Option<(usize, f64)> = None;

        for i in 0..n {
            let s = self.reg.types[i];
            let deg = self.links.out_degree[i];
            if deg == 0 || deg == n - 1 {
                a[i] = if deg == 0 { lo } else { hi };
                pinned[i] = true;
                boundary.push(i);
                continue;
            }
            let row = &u[s * nt..(s + 1) * nt];
            let terms: Vec<(f64, f64)> = (0..nt)
                .filter_map(|t| {
                    let c = self.reg.trials(i, t);
                    (c > 0).then(|| ((c as f64).ln(), row[t]))
                })
                .collect();
            let ln_deg = (deg as f64).ln();

            let mut ai = match warm {
                Some(w) => w[i],
                None => {
                    let share = deg as f64 / (n - 1) as f64;
                    let mean_u = terms.iter().map(|&(lc, ut)| lc.exp() * ut).sum::<f64>() / (n - 1) as f64;
                    (share / (1.0 - share)).ln() - mean_u
                }
            }
            .clamp(lo, hi);

            let mut converged = false;
            let mut step = f64::INFINITY;
            for sweep in 1..=self.config.a_max_iterations {
                let lse = log_sum_exp(terms.iter().map(|&(lc, ut)| lc + ut - crate::model::softplus(ut + ai)));
                let next = (ln_deg - lse).clamp(lo, hi);
                step = (next - ai).abs();
                ai = next;
                if step <= self.config.a_tolerance {
                    sweeps = sweeps.max(sweep);
                    converged = true;
                    break;
                }
            }
            if !converged {
                if worst.is_none_or(|(_, w)| step > w) {
                    worst = Some((i, step));
                }
                continue;
            }
            if ai <= lo || ai >= hi {
                pinned[i] = true;
                boundary.push(i);
            }
            a[i] = ai;
        }
        if let Some((agent, step)) = worst {
            return Err(Error::ALoopNoConvergence {
                agent,
                step,
                iterations: self.config.a_max_iterations,
            });
        }
        Ok(AHat {
            a,
            boundary_agents: boundary,
            pinned,
            sweeps,
        })
    }

    /// Concentrated log-likelihood and the fixed effects achieving it.
    pub fn concentrated(&self, beta: &[f64], warm: Option<&[f64]>) -> Result<(f64, AHat)> {
        let ahat = self.fixed_point_a(beta, warm)?;
        let ll = self.loglik(beta, &ahat.a);
        Ok((ll, ahat))
    }

    /// `beta`-block of the full score at `(beta, a)`.
    pub fn score_at(&self, beta: &[f64], a: &[f64]) -> Vec<f64> {
        let u = self.reg.index_table(beta);
        let nt = self.reg.n_types();
        let mut score = vec![0.0; self.reg.dim()];
        for (i, &ai) in a.iter().enumerate() {
            let s = self.reg.types[i];
            for t in 0..nt {
                let c = self.reg.trials(i, t);
                if c == 0 {
                    continue;
                }
                let resid = self.links.get(i, t) as f64 - c as f64 * logistic(u[s * nt + t] + ai);
                for (acc, z) in score.iter_mut().zip(self.reg.z(s, t)) {
                    *acc += resid * z;
                }
            }
        }
        let norm = self.pair_norm();
        score.iter_mut().for_each(|v| *v /= norm);
        score
    }

    /// `A`-block of the full score, one entry per agent (unnormalized).
    pub fn a_score_at(&self, beta: &[f64], a: &[f64]) -> Vec<f64> {
        let u = self.reg.index_table(beta);
        let nt = self.reg.n_types();
        a.iter()
            .enumerate()
            .map(|(i, &ai)| {
                let s = self.reg.types[i];
                (0..nt)
                    .map(|t| {
                        let c = self.reg.trials(i, t) as f64;
                        self.links.get(i, t) as f64 - c * logistic(u[s * nt + t] + ai)
                    })
                    .sum()
            })
            .collect()
    }

    /// Gradient of the concentrated log-likelihood. By the envelope property
    /// this is the `beta`-block of the full score at `A = Â(beta)`.
    pub fn concentrated_score(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let ahat = self.fixed_point_a(beta, None)?;
        Ok(self.score_at(beta, &ahat.a))
    }

    /// `H_bb - H_bA H_AA^{-1} H_bA'` (normalized by the pair count), with
    /// pinned agents contributing no correction.
    pub fn hessian_at(&self, beta: &[f64], ahat: &AHat) -> Result<DMatrix<f64>> {
        let d = self.reg.dim();
        let nt = self.reg.n_types();
        let u = self.reg.index_table(beta);
        let mut h = DMatrix::<f64>::zeros(d, d);
        let mut cross = vec![0.0; d];
        for (i, &ai) in ahat.a.iter().enumerate() {
            let s = self.reg.types[i];
            cross.iter_mut().for_each(|v| *v = 0.0);
            let mut total_w = 0.0;
            for t in 0..nt {
                let c = self.reg.trials(i, t);
                if c == 0 {
                    continue;
                }
                let p = logistic(u[s * nt + t] + ai);
                let w = c as f64 * p * (1.0 - p);
                let z = self.reg.z(s, t);
                for r in 0..d {
                    cross[r] += w * z[r];
                    for k in r..d {
                        h[(r, k)] -= w * z[r] * z[k];
                    }
                }
                total_w += w;
            }
            if ahat.pinned[i] {
                continue;
            }
            if !(total_w > 1e-14 * (self.reg.n() - 1) as f64) {
                return Err(Error::SingularAgentBlock {
                    agent: i,
                    variance: total_w,
                });
            }
            for r in 0..d {
                for k in r..d {
                    h[(r, k)] += cross[r] * cross[k] / total_w;
                }
            }
        }
        let norm = self.pair_norm();
        for r in 0..d {
            for k in r..d {
                h[(r, k)] /= norm;
                h[(k, r)] = h[(r, k)];
            }
        }
        Ok(h)
    }

    pub fn concentrated_hessian(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        let ahat = self.fixed_point_a(beta, None)?;
        self.hessian_at(beta, &ahat)
    }

    /// Newton ascent on the concentrated likelihood with step halving.
    pub fn maximize(&self) -> Result<EstimateResult> {
        let d = self.reg.dim();
        let mut beta = match &self.config.beta_init {
            Some(b) => {
                self.check_beta(b)?;
                b.clone()
            }
            None => vec![0.0; d],
        };
        let (mut ll, mut ahat) = self.concentrated(&beta, None)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite(format!("log-likelihood at the starting point is {ll}")));
        }

        let mut iterations = 0;
        let mut converged = false;
        let mut score = self.score_at(&beta, &ahat.a);
        let mut hessian = self.hessian_at(&beta, &ahat)?;
        loop {
            let norm = sup_norm(&score);
            if !norm.is_finite() {
                return Err(Error::NonFinite("concentrated score".into()));
            }
            if norm <= self.config.beta_tolerance {
                converged = true;
                break;
            }
            if iterations >= self.config.beta_max_iterations {
                break;
            }
            iterations += 1;

            let (step, _) = newton_direction(&hessian, &score)?;
            let mut accepted = None;
            let mut scale = 1.0;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                match self.concentrated(&trial, Some(&ahat.a)) {
                    Ok((trial_ll, trial_a)) if trial_ll.is_finite() && trial_ll >= ll => {
                        accepted = Some((trial, trial_ll, trial_a));
                        break;
                    }
                    Ok(_) => {}
                    Err(e) if e.is_numerical() => log::trace!("rejected trial step: {e}"),
                    Err(e) => return Err(e),
                }
                scale *= 0.5;
            }
            let Some((next_beta, next_ll, next_a)) = accepted else {
                log::debug!("line search stalled at iteration {iterations} (score {norm:.3e})");
                break;
            };
            beta = next_beta;
            ll = next_ll;
            ahat = next_a;
            score = self.score_at(&beta, &ahat.a);
            hessian = self.hessian_at(&beta, &ahat)?;
        }

        let (_, hessian_rank) = newton_direction(&hessian, &score)?;
        if hessian_rank < d {
            log::debug!("concentrated Hessian has rank {hessian_rank} < {d}");
        }
        Ok(EstimateResult {
            score_norm: sup_norm(&score),
            beta_hat: beta,
            a_hat: ahat.a,
            loglik: ll,
            converged,
            iterations,
            boundary_agents: ahat.boundary_agents,
            hessian_rank,
            se: None,
        })
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Newton ascent direction `(-H)^+ g` restricted to the eigen-directions of
/// `-H` that carry curvature, and the number of such directions.
pub fn newton_direction(hessian: &DMatrix<f64>, score: &[f64]) -> Result<(Vec<f64>, usize)> {
    let neg = -hessian.clone();
    if neg.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hessian".into()));
    }
    let eig = SymmetricEigen::new(neg);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if lambda_max <= 0.0 {
        return Err(Error::SingularMatrix("concentrated Hessian has no curvature".into()));
    }
    let g = DVector::from_column_slice(score);
    let mut step = DVector::<f64>::zeros(score.len());
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > RANK_TOLERANCE * lambda_max {
            let v = eig.eigenvectors.column(k);
            step += v * (v.dot(&g) / lambda);
            rank += 1;
        }
    }
    Ok((step.iter().copied().collect(), rank))
}

/// Everything produced by one run of the two-step estimator.
#[derive(Clone, Debug)]
pub struct Fit {
    pub result: EstimateResult,
    pub regressors: RegressorSet,
    pub pair_counts: PairCounts,
}

/// First step, regressors, then the concentrated MLE.
pub fn fit(network: &Network, types: &[usize], type_space: &TypeSpace, config: &MleConfig) -> Result<Fit> {
    let (q_hat, pair_counts) = first_step(network, types, type_space.len())?;
    let regressors = build_regressors(&q_hat, types, type_space)?;
    let result = ConcentratedLikelihood::new(&regressors, network, config)?.maximize()?;
    Ok(Fit {
        result,
        regressors,
        pair_counts,
    })
}

pub fn estimate(network: &Network, types: &[usize], type_space: &TypeSpace, config: &MleConfig) -> Result<EstimateResult> {
    fit(network, types, type_space, config).map(|f| f.result)
}

pub fn loglik(beta: &[f64], a: &[f64], regressors: &RegressorSet, network: &Network) -> Result<f64> {
    let lik = ConcentratedLikelihood::new(regressors, network, &MleConfig::default())?;
    lik.check_beta(beta)?;
    if a.len() != regressors.n() {
        return Err(Error::InvalidInput(format!("{} fixed effects for {} agents", a.len(), regressors.n())));
    }
    Ok(lik.loglik(beta, a))
}

pub fn fixed_point_a(beta: &[f64], regressors: &RegressorSet, network: &Network, config: &MleConfig) -> Result<AHat> {
    ConcentratedLikelihood::new(regressors, network, config)?.fixed_point_a(beta, None)
}

pub fn concentrated_score(beta: &[f64], regressors: &RegressorSet, network: &Network, config: &MleConfig) -> Result<Vec<f64>> {
    ConcentratedLikelihood::new(regressors, network, config)?.concentrated_score(beta)
}

pub fn concentrated_hessian(
    beta: &[f64],
    regressors: &RegressorSet,
    network: &Network,
    config: &MleConfig,
) -> Result<DMatrix<f64>> {
    ConcentratedLikelihood::new(regressors, network, config)?.concentrated_hessian(beta)
}
