use thiserror::Error;

/// Failures raised by the numerical routines.
///
/// Every variant carries the offending value so callers can report it
/// without re-deriving it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("covariance matrix is not symmetric (|V - V^T| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("covariance matrix has odd dimension {dim}")]
    OddDimension { dim: usize },
    #[error("covariance matrix is unphysical: symplectic eigenvalue {eigenvalue} < 1")]
    Unphysical { eigenvalue: f64 },
    #[error("attack covariance matrix is unphysical: symplectic eigenvalue {eigenvalue} < 1")]
    UnphysicalAttack { eigenvalue: f64 },
    #[error("two-mode invariant discriminant is negative ({discriminant:e})")]
    NumericalDegeneracy { discriminant: f64 },
    #[error("total relay noise must be positive, got V_q,N = {v_q_n}, V_p,N = {v_p_n}")]
    NonPositiveNoise { v_q_n: f64, v_p_n: f64 },
    #[error("degenerate configuration: conditioning denominators phi = {phi}, phi' = {phi_prime}")]
    DegenerateConditioning { phi: f64, phi_prime: f64 },
    #[error("{what} evaluated to a non-finite value")]
    NonFinite { what: &'static str },
    #[error("dataset columns have mismatched lengths ({detail})")]
    DatasetShape { detail: &'static str },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain { what, value, expected }
    }

    /// Whether the error comes from a bad input rather than from the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. } | Error::DatasetShape { .. } | Error::Config(_)
        )
    }
}
