use thiserror::Error;

/// Errors produced anywhere in the core pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("signal too short: {bins} in-band DFT bin(s), need at least 2")]
    TooShort { bins: usize },

    #[error("zero-norm signal")]
    ZeroNorm,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample-rate mismatch: {left} Hz vs {right} Hz")]
    FpsMismatch { left: u32, right: u32 },

    #[error("insufficient beats: found {found} peak(s), need at least 2")]
    InsufficientBeats { found: usize },

    #[error("heart rate {bpm:.2} bpm is outside the admissible range")]
    OutOfBand { bpm: f64 },

    #[error("missing generated duration {0} s")]
    MissingDuration(u32),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
