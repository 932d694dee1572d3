use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// configuration/input problems (2), numerical failures (3), and failed
/// verification checks (1).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("density has zero mass on [{left}, {right}]")]
    ZeroMass { left: f64, right: f64 },

    #[error("atom {value} lies outside the domain [{left}, {right}]")]
    OutOfDomain { value: f64, left: f64, right: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported potential: {0}")]
    UnsupportedPotential(String),

    #[error("potential is singular at x = {0}")]
    Singular(f64),

    #[error("collision: {0}")]
    Collision(String),

    #[error("step rejected after {halvings} halvings at t = {t} (dt too large for this N and V)")]
    HalvingsExhausted { halvings: u32, t: f64 },

    #[error("CFL violation: dt = {dt} exceeds the stable bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("positivity lost: min density {0} after step")]
    NegativeDensity(f64),

    #[error("boundary mass monitor: {mass:e} of mass in the outer cells at t = {t}")]
    BoundaryMass { mass: f64, t: f64 },

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification(_) => 1,
            Error::HalvingsExhausted { .. }
            | Error::Cfl { .. }
            | Error::NegativeDensity(_)
            | Error::BoundaryMass { .. }
            | Error::NoConvergence(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
