//! Domain types shared by every stage of the pipeline, plus the logistic
//! primitives.
//!
//! The coefficient vector is laid out as `(homophily block, reciprocity,
//! popularity)`: the first `dim(w)` entries multiply the covariate-pair
//! regressor `w(x_s, x_t)`, followed by the coefficient on the belief that the
//! target links back and the coefficient on the target's average linking
//! propensity to third parties.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default compact support for the fixed effects.
pub const DEFAULT_A_BOUNDS: (f64, f64) = (-8.0, 8.0);

/// Logistic CDF. Branches on the sign so `exp` never overflows.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow or cancellation.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln logistic(x)`.
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

/// Structural coefficients and the support of the fixed effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub beta: Vec<f64>,
    pub a_bounds: (f64, f64),
}

impl Parameters {
    pub fn new(beta: Vec<f64>) -> Self {
        Self {
            beta,
            a_bounds: DEFAULT_A_BOUNDS,
        }
    }

    /// Dimension of the covariate-pair regressor `w`.
    pub fn w_dim(&self) -> usize {
        self.beta.len().saturating_sub(2)
    }

    pub fn homophily(&self) -> &[f64] {
        &self.beta[..self.w_dim()]
    }

    pub fn reciprocity(&self) -> f64 {
        self.beta[self.w_dim()]
    }

    pub fn popularity(&self) -> f64 {
        self.beta[self.w_dim() + 1]
    }

    pub fn clamp_a(&self, a: f64) -> f64 {
        a.clamp(self.a_bounds.0, self.a_bounds.1)
    }
}

/// Discrete covariate support with its probabilities and the pairwise
/// regressor `w(x_s, x_t)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeSpace {
    pub support: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Row-major `T x T x w_dim`.
    pub w: Vec<f64>,
    pub w_dim: usize,
}

impl TypeSpace {
    /// Builds a type space from an explicit `T x T` table of regressor vectors.
    pub fn new(support: Vec<f64>, probabilities: Vec<f64>, w_table: &[Vec<Vec<f64>>]) -> Result<Self> {
        let t = support.len();
        if w_table.len() != t || w_table.iter().any(|row| row.len() != t) {
            return Err(Error::InvalidInput(format!(
                "w matrix must be {t} x {t}"
            )));
        }
        let w_dim = w_table
            .first()
            .and_then(|row| row.first())
            .map(Vec::len)
            .unwrap_or(0);
        let mut w = Vec::with_capacity(t * t * w_dim);
        for row in w_table {
            for cell in row {
                if cell.len() != w_dim {
                    return Err(Error::InvalidInput(
                        "w entries must all have the same dimension".into(),
                    ));
                }
                w.extend_from_slice(cell);
            }
        }
        Ok(Self {
            support,
            probabilities,
            w,
            w_dim,
        })
    }

    /// Scalar `w(x_s, x_t) = |x_s - x_t|`, the homophily regressor of the
    /// shipped scenarios.
    pub fn abs_diff(support: Vec<f64>, probabilities: Vec<f64>) -> Self {
        let w = support
            .iter()
            .flat_map(|xs| support.iter().map(move |xt| (xs - xt).abs()))
            .collect();
        Self {
            support,
            probabilities,
            w,
            w_dim: 1,
        }
    }

    /// `X in {-1, 1}` with equal probability and `w = |X_i - X_j|`.
    pub fn binary() -> Self {
        Self::abs_diff(vec![-1.0, 1.0], vec![0.5, 0.5])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    #[inline]
    pub fn w(&self, s: usize, t: usize) -> &[f64] {
        let k = self.w_dim;
        let start = (s * self.len() + t) * k;
        &self.w[start..start + k]
    }

    /// Index of the support point equal to `x`.
    pub fn type_of(&self, x: f64) -> Option<usize> {
        self.support.iter().position(|&v| v == x)
    }

    /// Column labels used in belief CSV headers.
    pub fn labels(&self) -> Vec<String> {
        self.support.iter().map(|x| format!("x={x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNode {
    pub node: f64,
    pub weight: f64,
}

/// Per-type discretization of the law of `A_i | X_i = x_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ADistribution {
    pub per_type: Vec<Vec<WeightedNode>>,
}

impl ADistribution {
    pub fn point_mass(types: usize, a: f64) -> Self {
        Self {
            per_type: vec![vec![WeightedNode { node: a, weight: 1.0 }]; types],
        }
    }

    pub fn clamped(mut self, bounds: (f64, f64)) -> Self {
        for rule in &mut self.per_type {
            for wn in rule.iter_mut() {
                wn.node = wn.node.clamp(bounds.0, bounds.1);
            }
        }
        self
    }
}

/// Realized agents: type indices, fixed effects, and the type histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub types: Vec<usize>,
    pub fixed_effects: Vec<f64>,
    pub type_counts: Vec<usize>,
}

impl Population {
    pub fn new(types: Vec<usize>, fixed_effects: Vec<f64>, n_types: usize) -> Result<Self> {
        if types.len() != fixed_effects.len() {
            return Err(Error::InvalidInput(format!(
                "{} types but {} fixed effects",
                types.len(),
                fixed_effects.len()
            )));
        }
        let type_counts = type_histogram(&types, n_types)?;
        Ok(Self {
            types,
            fixed_effects,
            type_counts,
        })
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }
}

pub fn type_histogram(types: &[usize], n_types: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; n_types];
    for (i, &t) in types.iter().enumerate() {
        *counts.get_mut(t).ok_or_else(|| {
            Error::InvalidInput(format!("agent {i} has type {t} outside 0..{n_types}"))
        })? += 1;
    }
    Ok(counts)
}

/// Directed binary adjacency without self-loops.
#[derive(Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    adj: Vec<bool>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("n", &self.n)
            .field("edges", &self.edge_count())
            .finish()
    }
}

impl Network {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.adj[i * n + j] = true;
                }
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for {n} agents"
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at agent {i}")));
            }
            g.adj[i * n + j] = true;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    /// Sets `G_ij`. Writes to the diagonal are ignored.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, linked: bool) {
        if i != j {
            self.adj[i * self.n + j] = linked;
        }
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b).count()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        self.adj
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / n, k % n))
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1)) as f64
    }
}

/// `q[s][t]`: probability a type-`s` agent proposes to a type-`t` agent,
/// integrated over the proposer's fixed effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefMatrix {
    types: usize,
    data: Vec<f64>,
}

impl BeliefMatrix {
    pub fn filled(types: usize, value: f64) -> Self {
        Self {
            types,
            data: vec![value; types * types],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::InvalidInput("belief matrix must be square".into()));
        }
        Ok(Self {
            types: t,
            data: rows.concat(),
        })
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.types.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_interior(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0 && v < 1.0)
    }
}

impl Index<(usize, usize)> for BeliefMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (s, t): (usize, usize)) -> &f64 {
        &self.data[s * self.types + t]
    }
}

impl IndexMut<(usize, usize)> for BeliefMatrix {
    #[inline]
    fn index_mut(&mut self, (s, t): (usize, usize)) -> &mut f64 {
        &mut self.data[s * self.types + t]
    }
}

/// Output of the concentrated joint MLE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub beta_hat: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Agents whose fixed effect sits on `a_bounds` or whose out-degree is 0 or `n - 1`.
    pub boundary_agents: Vec<usize>,
    pub score_norm: f64,
    /// Numerical rank of the concentrated Hessian at `beta_hat`.
    pub hessian_rank: usize,
    pub se: Option<Vec<f64>>,
}

/// One violated invariant found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every model invariant and returns all violations. An empty list
/// means the inputs are valid.
pub fn validate(params: &Parameters, type_space: &TypeSpace, a_dist: &ADistribution) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |field: &str, message: String| {
        issues.push(ValidationIssue {
            field: field.to_string(),
            message,
        })
    };

    if params.beta.iter().any(|b| !b.is_finite()) {
        push("parameters.beta", "non-finite coefficient".into());
    }
    if params.beta.len() < 3 {
        push(
            "parameters.beta",
            format!("need at least 3 coefficients, got {}", params.beta.len()),
        );
    } else if params.w_dim() != type_space.w_dim {
        push(
            "parameters.beta",
            format!(
                "length {} does not match w dimension {} + 2",
                params.beta.len(),
                type_space.w_dim
            ),
        );
    }
    let (lo, hi) = params.a_bounds;
    if !lo.is_finite() || !hi.is_finite() {
        push("parameters.a_bounds", "non-finite bound".into());
    } else if lo >= hi {
        push("parameters.a_bounds", format!("A_min {lo} must be below A_max {hi}"));
    }

    let t = type_space.len();
    if t == 0 {
        push("type_space.support", "empty support".into());
    }
    if type_space.probabilities.len() != t {
        push(
            "type_space.probabilities",
            format!("length {} does not match support length {t}", type_space.probabilities.len()),
        );
    }
    let total: f64 = type_space.probabilities.iter().sum();
    if type_space.probabilities.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        push(
            "type_space.probabilities",
            format!("simplex violation (sum {total})"),
        );
    }
    for s in 0..t {
        for u in s + 1..t {
            if type_space.support[s] == type_space.support[u] {
                push(
                    "type_space.support",
                    format!("duplicate support value {}", type_space.support[s]),
                );
            }
        }
    }
    if type_space.support.iter().any(|x| !x.is_finite()) {
        push("type_space.support", "non-finite support value".into());
    }
    if type_space.w.len() != t * t * type_space.w_dim {
        push("type_space.w_matrix", "shape does not match support".into());
    } else if type_space.w.iter().any(|x| !x.is_finite()) {
        push("type_space.w_matrix", "non-finite entry".into());
    }

    if a_dist.per_type.len() != t {
        push(
            "a_dist",
            format!("{} rules for {t} types", a_dist.per_type.len()),
        );
    }
    for (s, rule) in a_dist.per_type.iter().enumerate() {
        if rule.is_empty() {
            push("a_dist", format!("type {s} has no nodes"));
            continue;
        }
        let wsum: f64 = rule.iter().map(|wn| wn.weight).sum();
        if rule.iter().any(|wn| !(wn.weight >= 0.0)) || (wsum - 1.0).abs() > 1e-10 {
            push("a_dist", format!("type {s}: weights not normalized (sum {wsum})"));
        }
        if rule
            .iter()
            .any(|wn| !wn.node.is_finite() || wn.node < lo || wn.node > hi)
        {
            push("a_dist", format!("type {s}: node outside a_bounds"));
        }
    }
    issues
}
