//! Data-generating process for the Monte Carlo designs.
//!
//! Covariates are i.i.d. draws from the type space. Fixed effects follow
//!
//! ```text
//! A_i = (alpha_L + gamma a_i) 1{X_i < 0} + alpha_H 1{X_i >= 0} + V_i
//! a_i ~ N(0, var_a),  V_i ~ N(0, var_V)
//! ```
//!
//! (second arguments are variances) and are clamped to `a_bounds`. Links are
//! drawn as independent Bernoulli trials with the equilibrium choice
//! probabilities; the logistic shocks themselves are never materialized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{Equilibrium, Game, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{ADistribution, BeliefMatrix, Network, Parameters, Population, TypeSpace};
use crate::quadrature::discretize_normal;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub label: String,
    pub alpha_l: f64,
    pub alpha_h: f64,
    pub gamma: f64,
    pub var_a: f64,
    pub var_v: f64,
    pub n: usize,
    pub params: Parameters,
    pub seed: u64,
}

impl ScenarioSpec {
    fn preset(label: &str, alpha_l: f64, alpha_h: f64, gamma: f64, n: usize, seed: u64) -> Self {
        Self {
            label: label.to_string(),
            alpha_l,
            alpha_h,
            gamma,
            var_a: 0.1,
            var_v: 0.1f64.sqrt(),
            n,
            params: Parameters::new(vec![-2.0, 1.0, 1.0]),
            seed,
        }
    }

    /// Fixed effects correlated with `X` through its value only.
    pub fn scenario_1(n: usize, seed: u64) -> Self {
        Self::preset("scenario1", -2.0 / 3.0, -1.0 / 6.0, 0.0, n, seed)
    }

    /// Correlation through both the value of `X` and an individual draw.
    pub fn scenario_2(n: usize, seed: u64) -> Self {
        Self::preset("scenario2", -2.0 / 3.0, -1.0 / 6.0, 1.0, n, seed)
    }

    /// Fixed effects independent of `X`.
    pub fn scenario_3(n: usize, seed: u64) -> Self {
        Self::preset("scenario3", -0.5, -0.5, 0.0, n, seed)
    }

    pub fn by_number(k: u8, n: usize, seed: u64) -> Option<Self> {
        match k {
            1 => Some(Self::scenario_1(n, seed)),
            2 => Some(Self::scenario_2(n, seed)),
            3 => Some(Self::scenario_3(n, seed)),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n < 3 {
            bad.push(format!("n = {} (need >= 3)", self.n));
        }
        if !(self.var_a >= 0.0) {
            bad.push(format!("var_a = {}", self.var_a));
        }
        if !(self.var_v >= 0.0) {
            bad.push(format!("var_v = {}", self.var_v));
        }
        for (name, v) in [
            ("alpha_l", self.alpha_l),
            ("alpha_h", self.alpha_h),
            ("gamma", self.gamma),
        ] {
            if !v.is_finite() {
                bad.push(format!("{name} = {v}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("scenario: {}", bad.join(", "))))
        }
    }

    pub fn rng(&self) -> SimRng {
        SimRng::seed_from_u64(self.seed)
    }
}

fn is_low_group(x: f64) -> bool {
    x < 0.0
}

/// Draws covariate types, then `a_i`, then `V_i` for every agent.
pub fn draw_population<R: Rng + ?Sized>(spec: &ScenarioSpec, type_space: &TypeSpace, rng: &mut R) -> Result<Population> {
    spec.check()?;
    let n = spec.n;
    let cdf: Vec<f64> = type_space
        .probabilities
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let types: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
        })
        .collect();

    let a_draws = normal_draws(rng, spec.var_a, n)?;
    let v_draws = normal_draws(rng, spec.var_v, n)?;
    let fixed_effects = (0..n)
        .map(|i| {
            let base = if is_low_group(type_space.support[types[i]]) {
                spec.alpha_l + spec.gamma * a_draws[i]
            } else {
                spec.alpha_h
            };
            spec.params.clamp_a(base + v_draws[i])
        })
        .collect();
    Population::new(types, fixed_effects, type_space.len())
}

fn normal_draws<R: Rng + ?Sized>(rng: &mut R, variance: f64, n: usize) -> Result<Vec<f64>> {
    let law = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::InvalidInput(format!("normal law with variance {variance}: {e}")))?;
    Ok((0..n).map(|_| law.sample(rng)).collect())
}

/// Per-type law of the fixed effect as agents see it, discretized with
/// `n_nodes` Gauss–Hermite points and clamped to `a_bounds`.
pub fn scenario_a_dist(spec: &ScenarioSpec, type_space: &TypeSpace, n_nodes: usize) -> Result<ADistribution> {
    spec.check()?;
    let per_type = type_space
        .support
        .iter()
        .map(|&x| {
            let (mean, var) = scenario_a_moments(spec, x);
            discretize_normal(mean, var, n_nodes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ADistribution { per_type }.clamped(spec.params.a_bounds))
}

/// Mean and variance of `A | X = x` under the scenario.
pub fn scenario_a_moments(spec: &ScenarioSpec, x: f64) -> (f64, f64) {
    if is_low_group(x) {
        (spec.alpha_l, spec.gamma * spec.gamma * spec.var_a + spec.var_v)
    } else {
        (spec.alpha_h, spec.var_v)
    }
}

/// Draws every ordered pair `i != j` as Bernoulli with the equilibrium choice
/// probability, row by row.
pub fn generate_network<R: Rng + ?Sized>(
    population: &Population,
    q_star: &BeliefMatrix,
    params: &Parameters,
    type_space: &TypeSpace,
    rng: &mut R,
) -> Result<Network> {
    let game = Game::new(type_space, params, &population.type_counts)?;
    let n = population.n();
    let types = type_space.len();
    let mut g = Network::empty(n);
    let mut probs = vec![0.0; types];
    for i in 0..n {
        let s = population.types[i];
        let a = population.fixed_effects[i];
        for (t, p) in probs.iter_mut().enumerate() {
            *p = game.ccp(s, t, a, q_star);
        }
        for j in 0..n {
            let u: f64 = rng.random();
            if i != j && u < probs[population.types[j]] {
                g.set(i, j, true);
            }
        }
    }
    Ok(g)
}

/// One simulated dataset together with the equilibrium it was drawn from.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub population: Population,
    pub network: Network,
    pub equilibrium: Equilibrium,
}

/// Population, equilibrium for its realized counts, then the network, all
/// driven by `spec.seed`.
pub fn simulate(
    spec: &ScenarioSpec,
    type_space: &TypeSpace,
    solver: &SolverConfig,
    n_nodes: usize,
) -> Result<SimulatedData> {
    let mut rng = spec.rng();
    let population = draw_population(spec, type_space, &mut rng)?;
    let a_dist = scenario_a_dist(spec, type_space, n_nodes)?;
    let equilibrium = Game::new(type_space, &spec.params, &population.type_counts)?.solve(&a_dist, solver)?;
    let network = generate_network(&population, &equilibrium.beliefs, &spec.params, type_space, &mut rng)?;
    Ok(SimulatedData {
        population,
        network,
        equilibrium,
    })
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at agent count `n`: `base ^ hash(n, rep)`.
/// Independent of how replications are scheduled.
pub fn replication_seed(base_seed: u64, n: usize, rep: usize) -> u64 {
    base_seed ^ mix64(mix64(n as u64) ^ rep as u64)
}
