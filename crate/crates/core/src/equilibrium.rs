//! Conditional choice probabilities and the symmetric-equilibrium belief
//! fixed point, conditional on the realized type composition.
//!
//! For a proposer `i` of type `s` and a target `j` of type `t`, the link index
//! is
//!
//! ```text
//! w(x_s, x_t)'b_w + a + q[t][s] b_rec + b_pop (sum_u m_u q[t][u] - q[t][s] - q[t][t]) / (n - 2)
//! ```
//!
//! where `m` are the type counts. The popularity average is exact: it drops
//! `j`'s (nonexistent) link to itself and its link back to `i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logistic, ADistribution, BeliefMatrix, Parameters, TypeSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Sup-norm threshold on `|q - map(q)|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    /// Extra deterministic starting points used only to report whether
    /// distinct fixed points exist. The returned beliefs always come from
    /// the start `q = 0.5`.
    pub multistart_count: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 10_000,
            damping: 1.0,
            multistart_count: 1,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("solver.tolerance must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput("solver.damping must lie in (0, 1]".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("solver.max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub beliefs: BeliefMatrix,
    /// Number of belief-map evaluations.
    pub iterations: usize,
    pub residual: f64,
    pub damping: f64,
    /// Number of distinct fixed points reached across all starts, when
    /// `multistart_count > 1`.
    pub distinct_fixed_points: Option<usize>,
}

/// The game for one realized type composition.
#[derive(Clone, Debug)]
pub struct Game<'a> {
    type_space: &'a TypeSpace,
    params: &'a Parameters,
    counts: Vec<usize>,
    n: usize,
}

impl<'a> Game<'a> {
    pub fn new(type_space: &'a TypeSpace, params: &'a Parameters, counts: &[usize]) -> Result<Self> {
        if counts.len() != type_space.len() {
            return Err(Error::InvalidInput(format!(
                "{} type counts for {} types",
                counts.len(),
                type_space.len()
            )));
        }
        if params.w_dim() != type_space.w_dim || params.beta.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "beta has length {}, expected w dimension {} + 2",
                params.beta.len(),
                type_space.w_dim
            )));
        }
        let n: usize = counts.iter().sum();
        if n < 3 {
            return Err(Error::PopularityUndefined { n });
        }
        Ok(Self {
            type_space,
            params,
            counts: counts.to_vec(),
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn types(&self) -> usize {
        self.counts.len()
    }

    /// Average belief that a type-`t` target links to third parties, excluding
    /// the proposer (type `s`) and the target itself.
    pub fn popularity_average(&self, q: &BeliefMatrix, s: usize, t: usize) -> f64 {
        popularity_average(q, &self.counts, self.n, s, t)
    }

    pub fn link_index(&self, s: usize, t: usize, a: f64, q: &BeliefMatrix) -> f64 {
        let homophily: f64 = self
            .type_space
            .w(s, t)
            .iter()
            .zip(self.params.homophily())
            .map(|(w, b)| w * b)
            .sum();
        homophily
            + a
            + q[(t, s)] * self.params.reciprocity()
            + self.params.popularity() * self.popularity_average(q, s, t)
    }

    pub fn ccp(&self, s: usize, t: usize, a: f64, q: &BeliefMatrix) -> f64 {
        logistic(self.link_index(s, t, a, q))
    }

    /// Right-hand side of the equilibrium condition with the expectation over
    /// the proposer's fixed effect replaced by the quadrature in `a_dist`.
    pub fn belief_map(&self, q: &BeliefMatrix, a_dist: &ADistribution) -> BeliefMatrix {
        let types = self.types();
        let mut out = BeliefMatrix::filled(types, 0.0);
        for s in 0..types {
            for t in 0..types {
                // index without the fixed effect, shared across nodes
                let base = self.link_index(s, t, 0.0, q);
                out[(s, t)] = a_dist.per_type[s]
                    .iter()
                    .map(|wn| wn.weight * logistic(base + wn.node))
                    .sum();
            }
        }
        out
    }

    /// Fixed-point iteration from `q = 0.5`.
    ///
    /// Damping starts at `config.damping`; if the residual grows on 10
    /// consecutive iterations, or the iteration budget runs out, it drops
    /// to 0.5 once. Running out of budget at 0.5 is a convergence error.
    pub fn solve(&self, a_dist: &ADistribution, config: &SolverConfig) -> Result<Equilibrium> {
        config.check()?;
        if a_dist.per_type.len() != self.types() {
            return Err(Error::InvalidInput(format!(
                "a_dist has {} rules for {} types",
                a_dist.per_type.len(),
                self.types()
            )));
        }
        let start = BeliefMatrix::filled(self.types(), 0.5);
        let mut eq = self.iterate(start, a_dist, config)?;

        if config.multistart_count > 1 {
            let mut found = vec![eq.beliefs.clone()];
            for k in 1..config.multistart_count {
                let start = self.multistart_point(k, config.multistart_count);
                match self.iterate(start, a_dist, config) {
                    Ok(other) => {
                        if found.iter().all(|f| f.sup_distance(&other.beliefs) > 1e-6) {
                            found.push(other.beliefs);
                        }
                    }
                    Err(e) => log::debug!("multistart {k} failed: {e}"),
                }
            }
            eq.distinct_fixed_points = Some(found.len());
        }
        Ok(eq)
    }

    /// Deterministic spread of starting points over `(0, 1)^{T x T}`.
    fn multistart_point(&self, k: usize, count: usize) -> BeliefMatrix {
        let types = self.types();
        let mut q = BeliefMatrix::filled(types, 0.0);
        for s in 0..types {
            for t in 0..types {
                // alternate low/high corners so starts are not all on the diagonal
                let base = k as f64 / count as f64;
                let flip = (s * types + t + k) % 2 == 1;
                let v = if flip { 1.0 - base } else { base };
                q[(s, t)] = v.clamp(0.01, 0.99);
            }
        }
        q
    }

    fn iterate(&self, mut q: BeliefMatrix, a_dist: &ADistribution, config: &SolverConfig) -> Result<Equilibrium> {
        let mut damping = config.damping;
        let mut dropped = damping <= 0.5;
        let mut budget = config.max_iterations;
        let mut iterations = 0usize;
        let mut prev_residual = f64::INFINITY;
        let mut rising = 0usize;
        let mut residual: f64;

        loop {
            let mapped = self.belief_map(&q, a_dist);
            iterations += 1;
            residual = mapped.sup_distance(&q);
            if !residual.is_finite() {
                return Err(Error::NonFinite("belief map produced non-finite beliefs".into()));
            }
            if residual <= config.tolerance {
                return Ok(Equilibrium {
                    beliefs: q,
                    iterations,
                    residual,
                    damping,
                    distinct_fixed_points: None,
                });
            }

            rising = if residual > prev_residual { rising + 1 } else { 0 };
            prev_residual = residual;
            if !dropped && rising >= 10 {
                log::debug!("belief iteration oscillating at step {iterations}; damping -> 0.5");
                damping = 0.5;
                dropped = true;
                rising = 0;
            }

            budget -= 1;
            if budget == 0 {
                if dropped {
                    break;
                }
                damping = 0.5;
                dropped = true;
                budget = config.max_iterations;
            }

            let types = self.types();
            for s in 0..types {
                for t in 0..types {
                    q[(s, t)] = (1.0 - damping) * q[(s, t)] + damping * mapped[(s, t)];
                }
            }
        }
        Err(Error::NoConvergence {
            what: "equilibrium beliefs",
            iterations,
            residual,
        })
    }

    /// Lower bound `kappa` such that the belief map sends any `q` into
    /// `[kappa, 1 - kappa]`: the logistic of the most extreme attainable index
    /// given `a_bounds`, `|beta|` and the range of `w`.
    pub fn belief_bound(&self) -> f64 {
        let p = self.params;
        let mut w_max = 0.0f64;
        for s in 0..self.types() {
            for t in 0..self.types() {
                let h: f64 = self
                    .type_space
                    .w(s, t)
                    .iter()
                    .zip(p.homophily())
                    .map(|(w, b)| (w * b).abs())
                    .sum();
                w_max = w_max.max(h);
            }
        }
        let a_max = p.a_bounds.0.abs().max(p.a_bounds.1.abs());
        logistic(-(w_max + a_max + p.reciprocity().abs() + p.popularity().abs()))
    }
}

/// `(sum_u m_u q[t][u] - q[t][s] - q[t][t]) / (n - 2)`.
pub fn popularity_average(q: &BeliefMatrix, counts: &[usize], n: usize, s: usize, t: usize) -> f64 {
    let total: f64 = counts
        .iter()
        .enumerate()
        .map(|(u, &m)| m as f64 * q[(t, u)])
        .sum();
    (total - q[(t, s)] - q[(t, t)]) / (n as f64 - 2.0)
}

/// Convenience wrapper: build the game and solve it.
pub fn solve_equilibrium(
    type_space: &TypeSpace,
    params: &Parameters,
    counts: &[usize],
    a_dist: &ADistribution,
    config: &SolverConfig,
) -> Result<Equilibrium> {
    Game::new(type_space, params, counts)?.solve(a_dist, config)
}

/// Writes beliefs as CSV: a header `type,<label_0>,...` then one row per
/// proposer type.
pub fn write_beliefs_csv<W: std::io::Write>(q: &BeliefMatrix, type_space: &TypeSpace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labels = type_space.labels();
    let mut header = vec!["type".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (s, row) in q.rows().iter().enumerate() {
        let mut rec = vec![labels[s].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
