use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too coarse for order {nu}: n = {n} must exceed m(0, {nu}) = {m}")]
    GridTooCoarse { nu: u32, n: u32, m: u32 },

    #[error("interval [{start}, {end}] is not aligned to the level-{level} grid")]
    Misaligned { level: u32, start: f64, end: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite state {state:?} produced from {input:?} with noise {noise:?} and step {delta}")]
    NonFinite {
        state: Vec<f64>,
        input: Vec<f64>,
        noise: Vec<f64>,
        delta: f64,
    },

    #[error("noise not Lebesgue lower bounded at z* = {z_star:?}, r* = {r_star}")]
    NotLowerBounded { z_star: Vec<f64>, r_star: f64 },

    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error("localization annihilated the sample")]
    LocalizationAnnihilated,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Process exit status: 2 for bad input, 3 for a violated numerical
    /// invariant, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::GridTooCoarse { .. }
            | Error::Misaligned { .. }
            | Error::DimensionMismatch { .. }
            | Error::Config(_) => 2,
            Error::NonFinite { .. }
            | Error::NotLowerBounded { .. }
            | Error::Invariant(_)
            | Error::LocalizationAnnihilated
            | Error::DegenerateFit(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
