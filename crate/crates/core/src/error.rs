use thiserror::Error;

use crate::physics::Axis;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("not in EPR approximation regime along {axis}: sigma_p = {sigma_p} < 2 * sigma_phi = {}", 2.0 * sigma_phi)]
    NotEprRegime { axis: Axis, sigma_p: f64, sigma_phi: f64 },

    #[error("too few events: got {got}, need at least {need}")]
    TooFewEvents { got: usize, need: usize },

    #[error("too few frames: got {got}, need at least {need}")]
    TooFewFrames { got: usize, need: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("plane mismatch: {0}")]
    PlaneMismatch(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("grouping factor {factor} does not divide grid dimension {size}")]
    BadGrouping { factor: usize, size: usize },

    #[error("no significant peak: SNR {snr:.2} below detection threshold {threshold}")]
    NoSignificantPeak { snr: f64, threshold: f64 },

    #[error("peak narrower than pixel along {axis}: inferred variance {variance:e}")]
    PeakNarrowerThanPixel { axis: Axis, variance: f64 },

    #[error("peak fit failed: {0}")]
    FitFailed(String),

    #[error("empty region of interest")]
    EmptyRoi,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("frame file format: {0}")]
    Format(String),

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
