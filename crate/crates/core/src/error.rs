use thiserror::Error;

use crate::cohort::Arm;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("covariate `{0}` has no observed values and cannot be imputed")]
    Unimputable(String),
    #[error("arm `{0}` has no records")]
    EmptyArm(Arm),
    #[error("Cox fit diverged: coefficient for `{covariate}` reached {value:.3} on the standardized scale")]
    Divergence { covariate: String, value: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("cannot form {requested} bins: {message}")]
    DegenerateBins { requested: usize, message: String },
    #[error("risk shape infeasible: {0}")]
    ShapeInfeasible(String),
    #[error("brute-force matching refused: |A|={a}, |B|={b} exceeds the 7x7 guard")]
    SizeGuard { a: usize, b: usize },
    #[error("balanced cohort is empty for arm `{0}`")]
    EmptyBalanced(Arm),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence { .. }
            | Error::Numerical(_)
            | Error::UndefinedMetric(_)
            | Error::Validation(_)
            | Error::ShapeInfeasible(_) => 4,
            _ => 3,
        }
    }
}
