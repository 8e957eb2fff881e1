use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("pitch {0} is outside MIDI range 0..=127")]
    PitchOutOfRange(i32),
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("score is not normalized: {0}")]
    NotNormalized(String),
    #[error("measure {measure}, event {event}: {reason}")]
    BadEvent {
        measure: usize,
        event: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbcError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot serialize score: {0}")]
    Serialize(String),
}

impl AbcError {
    pub(crate) fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        AbcError::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("unsupported meter {0}; only 4/4 sources are accepted")]
    UnsupportedMeter(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("section pool is empty")]
    EmptyPool,
    #[error("at least one section per score is required")]
    ZeroSections,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("cannot encode: {0}")]
    Encode(#[from] ScoreError),
    #[error("token id {0} is outside the vocabulary")]
    IdOutOfRange(u32),
    #[error("unknown token symbol {0:?}")]
    UnknownSymbol(String),
    #[error("binary token data has odd length {0}")]
    OddBinaryLength(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("expected {expected} Hz audio, got {actual} Hz")]
    SampleRate { expected: u32, actual: u32 },
    #[error("invalid mel parameters: {0}")]
    InvalidParams(String),
    #[error("malformed feature file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("WER is undefined for an empty reference")]
    EmptyReference,
    #[error("WER corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error("unsupported WAV layout: {0}")]
    Unsupported(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no usable scores in {0}")]
    EmptyCorpus(PathBuf),
    #[error("record {index}: {message}")]
    Verification { index: u64, message: String },
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Abc(#[from] AbcError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Workers(String),
}
