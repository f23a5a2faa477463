use thiserror::Error;

/// Errors reported by the laboratory's constructions and estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be non-empty, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("entry count {actual} does not match {rows}x{cols}")]
    EntryCount { rows: usize, cols: usize, actual: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("offset mismatch: {left} vs {right}; densify before subtracting")]
    OffsetMismatch { left: usize, right: usize },
    #[error("dense materialization of dimension {dim} exceeds cap {cap}")]
    SizeCap { dim: usize, cap: usize },
    #[error("matrix {index} is not unitary (drift {drift:.3e})")]
    NotUnitary { index: usize, drift: f64 },
    #[error("not an isometry (drift {drift:.3e})")]
    NotIsometry { drift: f64 },
    #[error("value {value} is not unimodular")]
    NotUnimodular { value: String },
    #[error("invalid phase matrix: {0}")]
    Phase(String),
    #[error("phase matrix has non-rational entry ({row}, {col})")]
    IrrationalPhase { row: usize, col: usize },
    #[error("tuple length {tuple} does not match phase dimension {phase}")]
    DimensionMismatch { tuple: usize, phase: usize },
    #[error("generator index {index} out of range for d = {d}")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("ring size {ring} too small for window half-width {window} (need >= {needed})")]
    RingTooSmall { ring: usize, window: usize, needed: usize },
    #[error("delta {0} outside (0, 1)")]
    DeltaOutOfRange(f64),
    #[error("provenance mismatch: {0}")]
    Provenance(String),
    #[error("torus: {0}")]
    Torus(String),
    #[error("eta {eta} does not exceed certified eta_Q {eta_q}")]
    EtaInfeasible { eta: f64, eta_q: f64 },
    #[error("enumeration cap reached: {0}")]
    EnumerationCap(String),
    #[error("phase matrix is not ergodic ({0})")]
    NotErgodic(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
