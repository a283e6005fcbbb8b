use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid time interval: {0} s")]
    InvalidInterval(f64),

    #[error("invalid coordinate: lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("malformed cell: {0}")]
    MalformedCell(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("frame grammar violated at offset {offset}: {detail}")]
    FrameGrammar { offset: usize, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("corrupt input: {malformed} of {total} rows malformed")]
    CorruptInput { malformed: usize, total: usize },

    #[error("too short: {0}")]
    TooShort(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient context: need at least {needed} points, got {got}")]
    InsufficientContext { needed: usize, got: usize },

    #[error("degenerate prediction: zero prediction distance")]
    DegeneratePrediction,

    #[error("generation stalled at token {position}: grammar mask removed all probability mass")]
    GenerationStall { position: usize },

    #[error("no viable prediction: all {} samples rejected ({})", reasons.len(), reasons.join(", "))]
    NoViablePrediction { reasons: Vec<String> },

    #[error("pairing: {0}")]
    Pairing(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::EmptyInput(_) => "empty-input",
            Error::InvalidInterval(_) => "invalid-interval",
            Error::InvalidCoordinate { .. } => "invalid-coordinate",
            Error::MalformedCell(_) => "malformed-cell",
            Error::Parse(_) => "parse",
            Error::Domain(_) => "domain",
            Error::FrameGrammar { .. } => "frame-grammar",
            Error::Config(_) => "config",
            Error::CorruptInput { .. } => "corrupt-input",
            Error::TooShort(_) => "too-short",
            Error::InsufficientData(_) => "insufficient-data",
            Error::InsufficientContext { .. } => "insufficient-context",
            Error::DegeneratePrediction => "degenerate-prediction",
            Error::GenerationStall { .. } => "generation-stall",
            Error::NoViablePrediction { .. } => "no-viable-prediction",
            Error::Pairing(_) => "pairing",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
