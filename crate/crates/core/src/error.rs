use std::fmt;

/// Standing assumptions of the distributed method that a run can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Every communication graph is connected.
    Connectivity,
    /// Mixing matrices are doubly stochastic with a uniform positivity bound.
    DoublyStochastic,
    /// Oracle gradients stay bounded along the trajectory.
    BoundedGradients,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Assumption::Connectivity => "connectivity (every graph connected)",
            Assumption::DoublyStochastic => "doubly stochastic weights with positivity bound",
            Assumption::BoundedGradients => "bounded oracle gradients",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("assumption violated: {assumption}: {detail}")]
    AssumptionViolation { assumption: Assumption, detail: String },

    #[error("invalid range: s = {s} > k = {k}")]
    InvalidRange { s: usize, k: usize },

    #[error("non-finite oracle output from agent {agent} at round {round}")]
    NonFinite { agent: usize, round: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
