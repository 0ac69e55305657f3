use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid must have at least one bin and a positive cutoff")]
    EmptyGrid,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("vectors or operators live on different spectral grids")]
    GridMismatch,
    #[error("frequency {0} is not a bin edge of the grid")]
    MisalignedCut(f64),
    #[error("size {size} exceeds the configured cap {cap}")]
    SizeOverflow { size: usize, cap: usize },
    #[error("operation requires {expected} statistics")]
    StatisticsMismatch { expected: &'static str },
    #[error("bases are incompatible: {0}")]
    BasisMismatch(String),
    #[error("piece {piece} is not adapted to its left endpoint (defect {defect:e})")]
    AdaptednessViolation { piece: usize, defect: f64 },
    #[error("processes are not built on a common refinement: {0}")]
    RefinementMismatch(String),
    #[error("product of {n} creators needs truncation at least {n}, got {truncation}")]
    TruncationTooSmall { n: usize, truncation: usize },
    #[error("invalid differential pair: {0}")]
    InvalidDifferential(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
