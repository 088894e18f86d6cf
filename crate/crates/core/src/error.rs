//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by model construction, sampling, simulation and checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative weight {weight} on {what}")]
    NegativeWeight { what: String, weight: f64 },
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("unknown vertex id `{0}`")]
    UnknownVertex(String),
    #[error("edge ({0}, {1}) given twice with different weights")]
    AsymmetricEdge(String, String),
    #[error("self-loop on vertex `{0}`")]
    SelfLoop(String),
    #[error("positive-weight subgraph is disconnected: `{0}` unreachable from `{1}`")]
    NotIrreducible(String, String),
    #[error("reservoir mismatch at vertex `{vertex}`: {reason}")]
    ReservoirMismatch { vertex: String, reason: String },
    #[error("shape parameter two_s must be positive and finite, got {0}")]
    BadShape(f64),
    #[error("scale parameter must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("index {k} out of range for total {n}")]
    OutOfRange { k: u64, n: u64 },
    #[error("truncation epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("time step must be positive and finite, got {0}")]
    BadDt(f64),
    #[error("point lies outside the ordered simplex")]
    NotOrdered,
    #[error("state has a negative or non-finite component at index {0}")]
    NegativeState(usize),
    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },
    #[error("polynomial degree {degree} exceeds the quadrature node budget {budget}")]
    QuadratureDegree { degree: usize, budget: usize },
    #[error("moment diverges for the infinite-activity measure at exponent a = 0")]
    DivergentMoment,
    #[error("series truncation did not converge within {0} terms")]
    TruncationInsufficient(usize),
    #[error("moment expansion needs more than {0} terms")]
    TermBudget(usize),
    #[error("total event rate {rate} exceeds the cap {cap}")]
    RateOverflow { rate: f64, cap: f64 },
    #[error("no reservoir damping: the fixed-point system is singular")]
    SingularSystem,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed model description: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(two_s: f64) -> Result<()> {
    if two_s > 0.0 && two_s.is_finite() {
        Ok(())
    } else {
        Err(Error::BadShape(two_s))
    }
}

pub(crate) fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::BadEpsilon(eps))
    }
}
