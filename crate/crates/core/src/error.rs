use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid drive protocol: {0}")]
    InvalidProtocol(String),

    /// The stage duration is infinite because the active bond is itself frozen.
    #[error("degenerate protocol: bessel argument {argument} is within {distance:e} of a root of J0")]
    DegenerateProtocol { argument: f64, distance: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("norm drift {drift:e} exceeds tolerance at t = {time} (step {step:e}); reduce dt_max")]
    NormDrift { drift: f64, time: f64, step: f64 },

    #[error("trace drift {drift:e} exceeds tolerance at t = {time} (step {step:e}); reduce dt_max")]
    TraceDrift { drift: f64, time: f64, step: f64 },

    #[error("reduced density matrix has eigenvalue {0:e} below tolerance")]
    NegativeEigenvalue(f64),

    #[error("no signal arrived at site {site}: peak population {population:e}")]
    NoSignal { site: usize, population: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
