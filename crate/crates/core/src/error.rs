use thiserror::Error;

/// Errors produced by the prediction library and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector shapes do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input parameter lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A factorization or iteration failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Riccati iteration did not settle within the iteration budget.
    #[error("Riccati iteration did not converge after {iterations} steps (last change {last_change:.3e}); detectability violation suspected")]
    NotConverged { iterations: usize, last_change: f64 },

    /// The online session was driven out of order.
    #[error("usage error: {0}")]
    Usage(String),

    /// Experiment configuration could not be parsed or validated.
    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error("unknown experiment `{name}`; available: {available}")]
    UnknownExperiment { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Parameter(_) => "parameter",
            Error::Numerical(_) => "numerical",
            Error::NotConverged { .. } => "not_converged",
            Error::Usage(_) => "usage",
            Error::Config { .. } => "config",
            Error::UnknownExperiment { .. } => "unknown_experiment",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
