use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("position coincides with array element {index}")]
    CoincidentPosition { index: usize },

    #[error("channel matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("matrix is ill-conditioned (condition number {cond:.3e} exceeds {limit:.1e})")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("power budget infeasible: transmit power {p_t:.6e} W does not exceed static precoder power {static_power:.6e} W")]
    Infeasible { p_t: f64, static_power: f64 },

    #[error("monotonicity condition for the secrecy threshold does not hold: {0}")]
    ConditionViolated(String),

    #[error("eavesdropper channel lies in the users' span (null-space leakage {leakage:.3e})")]
    DegenerateNullSpace { leakage: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge within total index cap {cap}")]
    SeriesNotConverged { cap: usize },

    #[error("quadrature failed: estimated error {estimate:.3e} above tolerance {tol:.3e}")]
    QuadratureFailure { estimate: f64, tol: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
