use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: 2n={twice_n}, 2m={twice_m} for 2l={twice_l}")]
    IndexOutOfRange {
        twice_l: u32,
        twice_n: i32,
        twice_m: i32,
    },
    #[error("parity mismatch: 2n={twice_n}, 2m={twice_m} for 2l={twice_l}")]
    Parity {
        twice_l: u32,
        twice_n: i32,
        twice_m: i32,
    },
    #[error("grid too coarse: exact up to 2l={available}, requested 2l={requested}")]
    GridTooCoarse { available: u32, requested: u32 },
    #[error("input is not T3-invariant: entry of size {magnitude:e} at 2l={twice_l}, row {row}, column {col}")]
    NotInvariant {
        twice_l: u32,
        row: usize,
        col: usize,
        magnitude: f64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("surface not admissible: {0}")]
    Admissibility(String),
    #[error("ill-conditioned collocation: condition number {cond:e} exceeds {limit:e}")]
    IllConditioned { cond: f64, limit: f64 },
    #[error("collocation residual {residual:e} above tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("matrix square root argument not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("Sylvester equation singular (spectral gap {0:e})")]
    SylvesterSingular(f64),
    #[error("margin violation: need blocks up to 2l={needed}, symbol has {available}")]
    Margin { needed: u32, available: u32 },
    #[error("step rejected: {0}")]
    StepRejected(String),
    #[error("time step {dt} violates stability gate {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("function evaluation failed: {0}")]
    Evaluation(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::Parity { .. } => "parity",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::NotInvariant { .. } => "not_invariant",
            Error::Shape(_) => "shape",
            Error::Admissibility(_) => "admissibility",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::Residual { .. } => "residual",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::SylvesterSingular(_) => "sylvester_singular",
            Error::Margin { .. } => "margin",
            Error::StepRejected(_) => "step_rejected",
            Error::Cfl { .. } => "cfl",
            Error::Evaluation(_) => "evaluation",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
