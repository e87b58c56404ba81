use thiserror::Error;

pub type Result<T> = std::result::Result<T, LspError>;

#[derive(Debug, Error)]
pub enum LspError {
    #[error("view {view}: row {row} contains a non-finite value")]
    NonFiniteInput { view: usize, row: usize },

    #[error("view {view}: {reason}")]
    InvalidView { view: usize, reason: String },

    #[error("row {row}: all off-diagonal distances are zero, bandwidth undefined")]
    DegenerateRow { row: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite loss during descent (restart {restart}, EM iteration {iteration})")]
    NonFiniteLoss { restart: usize, iteration: usize },

    #[error("all mixture weights are zero")]
    DegenerateMixture,

    #[error("state file: {0}")]
    StateFormat(String),
}
