use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inadmissible elastic constants: leading principal minor {minor} of the compliance is {value:e}")]
    Admissibility { minor: usize, value: f64 },

    #[error("invalid material parameter: {0}")]
    InvalidMaterial(String),

    #[error("return mapping did not converge after {iterations} iterations (residual {residual:e})")]
    ReturnMapping { iterations: usize, residual: f64 },

    #[error("degenerate network: every base node has zero weight")]
    DegenerateNetwork,

    #[error("singular interface: Hᵀ(f₂C₁+f₁C₂)H is not invertible")]
    SingularInterface,

    #[error("sample {index} has a zero reference stiffness")]
    InvalidSample { index: usize },

    #[error("empty batch or dataset")]
    EmptyBatch,

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("Newton Jacobian is rank deficient at parent node {parent}")]
    RankDeficient { parent: usize },

    #[error("solver did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("loading path halted at step {step}: {source}")]
    PathHalted {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("inconsistent Newton system: {0}")]
    Assembly(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} is not a symmetric positive semi-definite stiffness: {detail}")]
    NotPsd { what: String, detail: String },

    #[error("reference path {index} has zero norm")]
    InvalidReference { index: usize },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: String, expected: u32 },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::ReturnMapping { .. }
            | Error::DegenerateNetwork
            | Error::SingularInterface
            | Error::NonFiniteLoss { .. }
            | Error::RankDeficient { .. }
            | Error::NonConvergence { .. } => true,
            Error::PathHalted { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
