//! Data engineering for audio-to-score transcription.
//!
//! The pipeline reads single-voice ABC tunes, normalizes them onto a C major 4/4 grid of
//! 192 ticks per measure, augments them by seeded pitch mutation and measure recombination,
//! encodes them into a closed 135-symbol token vocabulary and renders paired 16 kHz audio.
//! Log-mel features and token-level WER complete the training and evaluation surface.

pub mod abc;
pub mod augment;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod normalize;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod score;
pub mod signal;
pub mod synth;
pub mod tokenizer;

pub use error::{
    AbcError, AudioError, AugmentError, MetricsError, NormalizeError, PipelineError, ScoreError,
    SignalError, TokenError,
};
pub use score::{
    measure_tick_sum, transpose_pitch, ChordQuality, ChordSymbol, Duration, EventKind,
    KeySignature, Measure, Meter, Mode, NoteEvent, Pitch, Score,
};
