use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid must have at least one row and one column (got {rows}x{cols})")]
    EmptyGrid { rows: usize, cols: usize },

    #[error("expected {expected} values for the grid, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("softmax temperature must be positive and finite, got {0}")]
    InvalidBeta(f64),

    #[error("gaussian sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),

    /// The softmax partition value does not exceed the pixel count, so the
    /// background share `hw / C` is at least one and the bias map cannot be
    /// inverted.
    #[error("degenerate bias: partition value does not exceed pixel count (hw/C = {ratio})")]
    DegenerateBias { ratio: f64 },

    #[error("grid {rows}x{cols} is too small; need at least {min_rows}x{min_cols}")]
    GridTooSmall {
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
