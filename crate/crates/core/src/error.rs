use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds {tol:.3e}")]
    NotHermitian { asymmetry: f64, tol: f64 },

    #[error("eigendecomposition did not converge (dim {dim})")]
    EigenFailure { dim: usize },

    #[error("eigenvalue {eigenvalue:e} is outside the domain of the matrix function")]
    Domain { eigenvalue: f64 },

    #[error("support violation: weight {weight:e} on a null direction of the reference state")]
    Support { weight: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),

    #[error("invalid return vector: {0}")]
    InvalidReturns(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("degenerate return at round {round}: inner product {value:e}")]
    DegenerateReturn { round: usize, value: f64 },

    #[error("non-positive likelihood tr(A_n rho) = {value:e} at record {index}")]
    NonPositiveLikelihood { index: usize, value: f64 },

    #[error("learning rate {0} is outside (0, 1)")]
    LearningRate(f64),

    #[error("degenerate dimension {0}: log D must be positive")]
    DegenerateDimension(usize),

    #[error("outcome probabilities sum to {sum} (tolerance {tol:e})")]
    Probability { sum: f64, tol: f64 },

    #[error("solver did not converge after {iterations} iterations (best gap {best_gap:e})")]
    SolverStalled { iterations: usize, best_gap: f64 },

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("seed {seed}: {source}")]
    AtSeed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn at_round(self, round: usize) -> Self {
        Error::AtRound {
            round,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_seed(self, seed: u64) -> Self {
        Error::AtSeed {
            seed,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage errors map to exit status 2, everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
