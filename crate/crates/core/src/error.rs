use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("tape is frozen: backward has already run, record a new tape for further ops")]
    TapeFrozen,

    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },

    #[error("observer for `{0}` has not seen any data")]
    UninitializedObserver(String),

    #[error("unknown quantization point `{0}`")]
    UnknownPoint(String),

    #[error("image error: {0}")]
    Image(#[from] crate::data::ImageError),

    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape {
        op,
        detail: detail.into(),
    })
}
