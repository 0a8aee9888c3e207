use thiserror::Error;

/// Errors raised by the solver, the projectors, the objectives and the data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions, invalid parameters or malformed settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// A NaN or infinity where a finite value is required.
    #[error("numeric-domain error: {0}")]
    NumericDomain(String),

    /// Portfolio variance below the floor, so the Sharpe ratio is undefined.
    #[error("degenerate portfolio: variance {variance:e} is below the floor {floor:e}")]
    DegeneratePortfolio { variance: f64, floor: f64 },

    /// Malformed price data. `row` is 1-based and counts the header as row 1.
    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: usize, message: String },

    #[error("estimation error: {0}")]
    Estimation(String),

    /// A failure inside the iteration loop, tagged with the iteration that produced it.
    #[error("solver failed at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::Solver { .. } => e,
            other => Error::Solver { iteration, source: Box::new(other) },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
