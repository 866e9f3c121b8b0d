use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} of the mobility matrix sums to zero")]
    ZeroRowSum(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("column {0} is constant; cannot build an orthogonal basis")]
    DegenerateColumn(usize),

    #[error("panel has no outcome column")]
    MissingOutcome,

    #[error("numerical failure at sweep {sweep}: {what}")]
    NumericalFailure { sweep: usize, what: String },

    #[error("degenerate denominator in {0}")]
    DegenerateDenominator(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure { .. } | Error::DegenerateDenominator(_)
        )
    }
}
