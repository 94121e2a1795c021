use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected} media objects, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no valid observation in series")]
    NoValidObservation,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate weight vector: all weights are zero")]
    DegenerateWeights,

    #[error("campaign is over: no epochs left")]
    CampaignOver,

    #[error("baseline has zero clicks")]
    ZeroBaselineClicks,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
