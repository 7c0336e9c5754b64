use thiserror::Error;

/// Errors raised by the library. The CLI maps each variant onto an exit code
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid geometry request: {0}")]
    InvalidGeometry(String),

    #[error("spectral parameter {gamma} outside the open gap ({lo}, {hi})")]
    OutsideSpectralGap { gamma: f64, lo: f64, hi: f64 },

    #[error("guided-mode roots closer than the scan resolution near gamma = {near}; refine the scan")]
    UnresolvedRoots { near: f64 },

    #[error("mode index {index} out of range (profile carries {count} guided modes)")]
    ModeIndex { index: usize, count: usize },

    #[error("radiating kernel requires symmetric cladding, got n_plus = {n_plus}, n_minus = {n_minus}")]
    AsymmetricCladding { n_plus: f64, n_minus: f64 },

    #[error("kernel evaluated at its singular point (source and observer coincide)")]
    SingularPoint,

    #[error("spectral quadrature did not converge: last two refinements differ by {difference:e} (relative)")]
    QuadratureNonConvergence { difference: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field extent too small: {0}")]
    ExtentTooSmall(String),

    #[error("fixed-point iteration is not contracting (ratios {ratios:?})")]
    NonContraction { ratios: Vec<f64> },

    #[error("fixed-point iteration did not reach tolerance in {iterations} iterations")]
    MaxIterations { iterations: usize },

    #[error("contraction hypothesis violated: measured norm {norm} >= 1 (use forced mode to run anyway)")]
    ContractionHypothesis { norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidProfile(_) | Error::Format(_) | Error::Io(_) => 2,
            Error::InvalidGeometry(_) | Error::GridMismatch(_) | Error::ExtentTooSmall(_) => 2,
            Error::ModeIndex { .. } | Error::AsymmetricCladding { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
