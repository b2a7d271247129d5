use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Closed forms that rely on distinct rate parameters were handed (near-)equal ones.
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("numeric instability: {0}")]
    NumericInstability(String),

    #[error("{what} = {value} exceeds the enumeration cap of {cap}; use the Monte-Carlo estimators instead")]
    CombinatorialBlowup {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("terminal infeasibility: {0}")]
    TerminalInfeasibility(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
