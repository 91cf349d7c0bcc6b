//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by construction, coding, and measurement routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is out of its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A table that must be row-stochastic is not.
    #[error("row {row} is not a probability distribution: {detail}")]
    NotStochastic { row: usize, detail: String },

    /// The requested construction cannot be realized at this block length,
    /// e.g. a chaining set larger than the information set.
    #[error("infeasible construction: {0}")]
    Infeasible(String),

    /// An exact computation would exceed its configured state budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Both masses of a belief pair vanished, i.e. the observation is
    /// inconsistent with every input value.
    #[error("degenerate belief at index {0}: observation inconsistent with all inputs")]
    DegenerateBelief(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 1 config error, 2 infeasibility,
    /// 3 budget exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 2,
            Error::BudgetExceeded(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
