use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid modulation order {0}: expected an even power of two")]
    InvalidOrder(usize),
    #[error("cannot normalize an all-zero sequence")]
    ZeroSequence,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for {len} categories")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("operation requires a rectangular QAM constellation")]
    NotQam,
    #[error("power mismatch: sequence power {actual} differs from configured {expected}")]
    PowerMismatch { expected: f64, actual: f64 },
    #[error("backward called on an empty tape or non-scalar output")]
    NoForward,
    #[error("NaN gradient in parameter `{0}`")]
    NanGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("degenerate quantizer corpus: values are constant")]
    DegenerateCorpus,
    #[error("empty symbol stream")]
    EmptyStream,
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
