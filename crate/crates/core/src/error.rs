use thiserror::Error;

/// Errors produced by dataset ingestion and metric computation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("schema violation at row {row}: {msg}")]
    SchemaViolation { row: usize, msg: String },

    #[error("duplicate rating at row {row}: repetition '{repetition}', item '{item}', rater '{rater}'")]
    DuplicateRating {
        row: usize,
        repetition: String,
        item: String,
        rater: String,
    },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("no ratings for item '{0}'")]
    NoRatings(String),

    #[error("degenerate: agreement undefined ({0})")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
