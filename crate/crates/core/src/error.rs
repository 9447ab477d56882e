use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("day {household_id}/{date} has zero total consumption")]
    ZeroConsumptionDay { household_id: String, date: String },

    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty series")]
    EmptySeries,

    #[error("warping window must be >= 1, got {0}")]
    InvalidWindow(usize),

    #[error("at least 2 curves are required, got {0}")]
    TooFewCurves(usize),

    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),

    #[error("graph has no edges with positive total weight (raise lambda)")]
    EmptyGraph,

    #[error("partition does not match graph: {0}")]
    InvalidPartition(String),

    #[error("cluster is empty")]
    EmptyCluster,

    #[error("centers of clusters {0} and {1} coincide")]
    CoincidentCenters(usize, usize),

    #[error("S_Dbw density is zero at every cluster center")]
    DegenerateDensity,

    #[error("index is undefined for a single cluster")]
    UndefinedForSingleCluster,

    #[error("invalid cluster count k={k} for n={n}")]
    InvalidK { k: usize, n: usize },

    #[error("comparison skipped: reference clustering has k={0} (< 2)")]
    ComparisonSkipped(usize),

    #[error("no directory interval contains a selectable sweep point")]
    EmptyDirectory,

    #[error("invalid gamma grid: {0}")]
    InvalidGrid(String),

    #[error("invalid interval set: {0}")]
    InvalidIntervals(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
}
