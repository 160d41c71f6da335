use thiserror::Error;

/// Which structural assumption on the vehicle loop failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// The closed loop T(z) must be strictly proper.
    StrictlyProper,
    /// K(z)G(z) must carry at least two poles at z = 1.
    DoubleIntegrator,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Assumption::StrictlyProper => write!(f, "1a (T strictly proper)"),
            Assumption::DoubleIntegrator => write!(f, "1b (double integral action in K*G)"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("evaluation at a pole: |den(z)| = {magnitude:e}")]
    EvaluationAtPole { magnitude: f64 },
    #[error("degenerate loop: 1 + K*G*H is identically zero")]
    DegenerateLoop,
    #[error("transfer function is not proper (deg num {num} > deg den {den})")]
    NotProper { num: usize, den: usize },
    #[error("system is unstable: pole modulus {max_pole_modulus}")]
    UnstableSystem { max_pole_modulus: f64 },
    #[error("assumption {which} violated: {detail}")]
    AssumptionViolation { which: Assumption, detail: String },
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("platoon is not mean-square stable: rho(A) = {rho}")]
    NotMss { rho: f64 },
    #[error("no spectral factorization: min(1 - |T|^2) = {min_value:e}")]
    NoFactorization { min_value: f64 },
    #[error("ill-conditioned spectral factorization: {0}")]
    IllConditioned(String),
    #[error("cancellation failure at z = 1: remainder {remainder:e}")]
    CancellationFailure { remainder: f64 },
    #[error("platoon is not string stable: max |T(e^jw)| = {max_gain} at w = {omega}")]
    NotStringStable { max_gain: f64, omega: f64 },
    #[error("series did not converge after {terms} terms (tail estimate {tail:e})")]
    SlowConvergence { terms: usize, tail: f64 },
    #[error("horizon too short: tail estimate {tail:e} exceeds tolerance")]
    HorizonTooShort { tail: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("output error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
