use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A landmark falls outside the heatmap grid once divided by the scale.
    #[error("landmark {index} at ({x}, {y}) lies outside the heatmap grid")]
    OutOfDomain { index: usize, x: f64, y: f64 },

    #[error("invalid heatmap: {0}")]
    InvalidHeatmap(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Prior moments were requested before any past frame carried weight.
    #[error("no prior available at frame {t}")]
    NoPrior { t: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// Ground-truth motion leaves the declared frame box.
    #[error("frame {frame}: landmark {index} leaves the frame box")]
    OutOfFrame { frame: usize, index: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
