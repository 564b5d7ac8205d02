use thiserror::Error;

/// Every failure the model, solvers and runner can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("ordering violation: {0}")]
    OrderingViolation(String),

    #[error("range violation: {0}")]
    RangeViolation(String),

    #[error("negative supply of good workers (g = {0})")]
    NegativeSupply(f64),

    #[error("ability distribution is flat at q = {0}")]
    NonInvertible(f64),

    #[error("no root bracketed in [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("both signal likelihoods vanish at eta = {0}")]
    DegenerateLikelihood(f64),

    #[error("posterior never reaches the hiring cutoff {0}")]
    CutoffUnreachable(f64),

    #[error("dynamic program needs {states} states, budget is {budget}")]
    HorizonTooLarge { states: usize, budget: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{source_name}:{line}: {message}")]
    Config {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            source_name: "<config>".into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn with_source_name(self, name: &str) -> Self {
        match self {
            Error::Config { line, message, .. } => Error::Config {
                source_name: name.to_string(),
                line,
                message,
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
