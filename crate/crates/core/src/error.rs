use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the solvers and the scenario layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse failure: {0}")]
    Parse(String),

    /// A scenario or argument violates a documented invariant. The payload names the field.
    #[error("invariant violation: {field}")]
    Invariant { field: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    /// Water-filling with a zero power price and a positive rate weight has no finite optimum.
    #[error("water-filling unbounded: power price is zero while the rate weight is positive")]
    WaterFillUnbounded,

    #[error("reference trajectory is infeasible: {0}")]
    InfeasibleReference(String),

    /// The mission cannot be flown at all (q_I to q_F does not fit into the horizon).
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    /// Gram matrix kept failing to factor over repeated channel draws.
    #[error("channel Gram matrix singular in {0} consecutive draws")]
    SingularGram(usize),

    #[error("no feasible horizon up to {t_max} s")]
    HorizonExceeded { t_max: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invariant(field: impl Into<String>) -> Error {
    Error::Invariant {
        field: field.into(),
    }
}
