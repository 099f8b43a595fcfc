//! Directed network formation with incomplete information and unobserved
//! degree heterogeneity.
//!
//! The crate covers the whole pipeline: solving for the Bayesian equilibrium
//! belief matrix, simulating networks from it, the two-step estimator with
//! agent fixed effects, its analytic variance, a pooled-logit benchmark that
//! ignores the fixed effects, and a seeded Monte Carlo driver.

pub mod error;
pub mod model;
pub mod quadrature;
pub mod equilibrium;
pub mod simulate;
pub mod estimate;
pub mod inference;
pub mod baseline;
pub mod mc;
pub mod config;
pub mod io;

pub use error::{Error, Result};
pub use model::{
    ADistribution, BeliefMatrix, EstimateResult, Network, Parameters, Population, TypeSpace, ValidationIssue,
    WeightedNode,
};
pub use equilibrium::{solve_equilibrium, Equilibrium, Game, SolverConfig};
pub use estimate::{estimate, fit, Fit, MleConfig};
pub use baseline::{estimate_leung, LeungResult};
pub use inference::VarianceReport;
pub use mc::{EstimatorKind, McConfig, McSummary};
pub use config::Config;
pub use simulate::ScenarioSpec;
