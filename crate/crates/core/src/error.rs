use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("subsystem index {index} out of range for layout with {len} subsystems")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("label {label} at position {position} exceeds subsystem dimension {dim}")]
    LabelOutOfRange {
        position: usize,
        label: usize,
        dim: usize,
    },

    #[error("numerical integrity violated: {0}")]
    NumericalIntegrity(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("target splitting {target_hz} Hz unachievable with |B| = {b_max_t} T (reachable range {min_hz}..={max_hz} Hz)")]
    UnachievableSplitting {
        target_hz: f64,
        b_max_t: f64,
        min_hz: f64,
        max_hz: f64,
    },

    #[error("not in the transmon regime: E_J/E_C = {ratio}")]
    NonTransmonRegime { ratio: f64 },

    #[error("field-profile grids differ at cell {cell}: {reason}")]
    GridMismatch { cell: usize, reason: String },

    #[error("integration failed at t = {t_s} s: {reason}")]
    IntegrationFailure { t_s: f64, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalIntegrity(_)
                | Error::IntegrationFailure { .. }
                | Error::DegenerateConfiguration(_)
                | Error::GridMismatch { .. }
        )
    }
}
