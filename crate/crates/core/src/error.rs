use thiserror::Error;

/// Errors raised across the transmission stack.
#[derive(Debug, Error)]
pub enum HdaError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged in {stage} at epoch {epoch}: non-finite {what}")]
    Divergence {
        stage: String,
        epoch: usize,
        what: String,
    },
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("deep fade: |h|^2 = {0:e} below threshold")]
    DeepFade(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("diffusion step {step} outside 1..={horizon}")]
    Step { step: usize, horizon: usize },
    #[error("refused: {0}")]
    Refused(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("image too small for {scales}-scale MS-SSIM: {height}x{width}")]
    Scale {
        scales: usize,
        height: usize,
        width: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HdaError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HdaError::Dimension(msg.into()))
}
