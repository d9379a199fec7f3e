use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("levenberg-marquardt did not converge after {iterations} iterations (rms {last_rms:.3e} px)")]
    NoConvergence { iterations: usize, last_rms: f64 },
    #[error("face landmark {joint} below confidence gate ({confidence:.3} < {min:.3})")]
    LowConfidence { joint: usize, confidence: f64, min: f64 },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error stems from user input or configuration rather than
    /// an internal failure.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Io(e) => matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::AlreadyExists),
            Error::Diverged(_) | Error::NoConvergence { .. } => false,
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
