use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Two distinct particles at zero separation, in original indexing.
    #[error("singular interaction: particles {i} and {j} overlap")]
    Singularity { i: usize, j: usize },

    #[error("pair interaction evaluated at zero distance")]
    ZeroDistance,

    #[error("step {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("system generation failed: {0}")]
    Generation(String),

    #[error("timing sections improperly nested: {0}")]
    Nesting(String),

    #[error("invalid system: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
