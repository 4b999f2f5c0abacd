use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position of entry {index} is not finite ({value})")]
    NonFinitePosition { index: usize, value: f64 },

    #[error("neutral color needs two distinct labels, got {{{0}, {0}}}")]
    DegenerateNeutral(i32),

    #[error("initial configuration is trivial: distinct colors share position {0}")]
    TrivialConfiguration(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("collision scheme not admissible here: {0}")]
    InadmissibleScheme(String),

    #[error("unknown type label {0}")]
    UnknownType(i32),

    #[error("enumeration tree too large: more than {limit} leaves")]
    TreeTooLarge { limit: u64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
