use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid factor point: {0}")]
    InvalidPoint(String),
    #[error("astronomical index: L^F does not fit in a 64-bit row index")]
    AstronomicalIndex,
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: u64, rows: u64 },
    #[error("instance too large to materialize: {rows} rows exceeds cap {cap}")]
    TooLargeToMaterialize { rows: String, cap: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank-deficient design")]
    RankDeficient,
    #[error("singular downdate: 1 - v'B^-1 v = {residual:e}")]
    Singular { residual: f64 },
    #[error("oracle capacity exceeded: {0}")]
    OracleCapacity(String),
    #[error("reference capacity exceeded: {0}")]
    ReferenceCapacity(String),
    #[error("infeasible: budget {budget} is below the row dimension {rows}")]
    Infeasible { budget: u64, rows: usize },
    #[error("quadratic model needs L >= 3 to build an initial design")]
    QuadraticNeedsThreeLevels,
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}
