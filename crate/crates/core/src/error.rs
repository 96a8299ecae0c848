use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("correlation undefined: {0} has zero variance")]
    UndefinedCorrelation(&'static str),

    #[error("label {label} is not valid for a {n_classes}-class scheme")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("class {class} is absent from the training set")]
    MissingClass { class: usize },

    #[error("label scheme mismatch: expected {expected}, found {found}")]
    SchemeMismatch { expected: String, found: String },

    #[error("plaintexts are required but missing")]
    MissingPlaintexts,

    #[error("backward called without a cached train-mode forward pass")]
    NoForwardCache,

    #[error("non-finite gradient rejected by the optimizer")]
    NonFiniteGradient,

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("trace scaler has not been fitted")]
    UnfittedScaler,

    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("stage `{stage}` failed{}: {source}", repeat.map(|r| format!(" in repeat {r}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        repeat: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str, repeat: Option<usize>) -> Self {
        Error::Stage {
            stage,
            repeat,
            source: Box::new(self),
        }
    }

    /// True for errors caused by invalid user input rather than a runtime fault.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
