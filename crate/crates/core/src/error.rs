use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the solver, simulator and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("popularity term undefined: need at least 3 agents, got {n}")]
    PopularityUndefined { n: usize },

    #[error("no convergence: {what} after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("type pair unobserved: ({s}, {t}) has no ordered agent pairs")]
    TypePairUnobserved { s: usize, t: usize },

    #[error("A-loop no convergence: agent {agent} still moving by {step:.3e} after {iterations} sweeps")]
    ALoopNoConvergence {
        agent: usize,
        step: f64,
        iterations: usize,
    },

    #[error("singular fixed-effect block: agent {agent} has total link variance {variance:.3e}")]
    SingularAgentBlock { agent: usize, variance: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("separation: {0}")]
    Separation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::ALoopNoConvergence { .. }
                | Error::SingularAgentBlock { .. }
                | Error::SingularMatrix(_)
                | Error::NonFinite(_)
                | Error::Separation(_)
        )
    }
}
