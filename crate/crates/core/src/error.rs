use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (largest jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no data for input model `{0}`")]
    EmptyModelData(String),

    #[error("invalid data for input model `{model}`: {reason}")]
    InvalidData { model: String, reason: String },

    #[error("sample for input model `{0}` has zero standard deviation")]
    DegenerateSample(String),

    #[error("input model `{model}` still degenerate after {attempts} redraws")]
    ExhaustedRedraws { model: String, attempts: usize },

    #[error("invalid moments for `{model}`: {reason}")]
    InvalidMoments { model: String, reason: String },

    #[error("design has {0} points; at least 2 are required")]
    InsufficientDesign(usize),

    #[error("too few samples: have {have}, need {need}")]
    TooFewSamples { have: usize, need: usize },

    #[error("sample covariance is singular")]
    SingularCovariance,

    #[error("infeasible test plan: {0}")]
    Infeasible(String),

    #[error("design space did not stabilize after {0} refinement rounds")]
    DidNotStabilize(usize),

    #[error("cost table is missing subset {0:#b}")]
    MissingSubset(u32),

    #[error("exact Shapley enumeration supports at most {max} models, got {got}")]
    TooManyModels { got: usize, max: usize },

    #[error("queueing network is unstable: station {station} has traffic intensity {rho}")]
    Unstable { station: usize, rho: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("external simulator failed: {0}")]
    Simulator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NonFiniteObjective => "NonFiniteObjective",
            Error::InvalidSize(_) => "InvalidSize",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyModelData(_) => "EmptyModelData",
            Error::InvalidData { .. } => "InvalidData",
            Error::DegenerateSample(_) => "DegenerateSample",
            Error::ExhaustedRedraws { .. } => "ExhaustedRedraws",
            Error::InvalidMoments { .. } => "InvalidMoments",
            Error::InsufficientDesign(_) => "InsufficientDesign",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::SingularCovariance => "SingularCovariance",
            Error::Infeasible(_) => "Infeasible",
            Error::DidNotStabilize(_) => "DidNotStabilize",
            Error::MissingSubset(_) => "MissingSubset",
            Error::TooManyModels { .. } => "TooManyModels",
            Error::Unstable { .. } => "Unstable",
            Error::Config(_) => "Config",
            Error::Simulator(_) => "Simulator",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Process exit code: 2 for configuration/usage problems, 3 for numerical or domain failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::InvalidSize(_)
            | Error::EmptyModelData(_)
            | Error::InvalidData { .. }
            | Error::TooManyModels { .. }
            | Error::Infeasible(_)
            | Error::DimensionMismatch { .. }
            | Error::InsufficientDesign(_) => 2,
            _ => 3,
        }
    }
}
