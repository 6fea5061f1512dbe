use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped so that callers (the CLI in particular) can map
/// them onto "bad input", "bad data" and "numerical failure" outcomes via
/// [`Error::kind`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty measure: a particle measure needs at least one particle")]
    EmptyMeasure,

    #[error("non-finite coordinate in particle {index}")]
    NonFinite { index: usize },

    #[error("map produced a non-finite coordinate for particle {index}")]
    InvalidMap { index: usize },

    #[error("invalid box: lo[{coord}] = {lo} exceeds hi[{coord}] = {hi}")]
    InvalidBox { coord: usize, lo: f64, hi: f64 },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("transport between measures with {left} and {right} particles is unsupported; equal counts required")]
    UnequalCounts { left: usize, right: usize },

    #[error("exact transport capped at {cap} particles, got {n}; subsample the clouds first")]
    SizeCap { n: usize, cap: usize },

    #[error("matrix is not positive semidefinite: most negative eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("singular process matrix W (smallest singular value {sigma_min:e}); W must be invertible")]
    SingularMatrix { sigma_min: f64 },

    #[error("true parameter unavailable: {0} requires theta_star")]
    MissingTruth(&'static str),

    #[error("step size tau = {tau} outside the admissible interval (0, {tau_max})")]
    UnsafeStep { tau: f64, tau_max: f64 },

    #[error("invalid observation at iteration {iteration}: {reason}")]
    InvalidObservation { iteration: usize, reason: String },

    #[error("unstable discretization: spectral radius {spectral_radius} >= 1")]
    Unstable { spectral_radius: f64 },

    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    #[error("irregular observation spacing between t = {t0} and t = {t1}: gap {gap}, expected {expected}")]
    IrregularSpacing { t0: f64, t1: f64, gap: f64, expected: f64 },

    #[error("damping ratio undefined for b = {b} <= 0")]
    UndefinedRatio { b: f64 },

    #[error("unsafe initial state: damping ratio {zeta} below threshold {zeta_min}")]
    UnsafeStart { zeta: f64, zeta_min: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse classification used to pick CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    UnsafeStep,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            UnsafeStep { .. } => ErrorKind::UnsafeStep,
            Unstable { .. } | RankDeficient(_) | SingularMatrix { .. } | NotPsd { .. } => {
                ErrorKind::Numerical
            }
            InvalidBox { .. } | InvalidSet(_) | InvalidParameter { .. } | IndexOutOfRange { .. }
            | SizeCap { .. } | UnsafeStart { .. } | MissingTruth(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
