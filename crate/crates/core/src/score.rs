//! Core music types: pitches, durations on the 1/192 tick grid, measures and scores.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ScoreError;

/// Ticks in a whole note, and therefore in one normalized 4/4 measure.
pub const TICKS_PER_MEASURE: u32 = 192;

/// Normalized durations are multiples of this many ticks.
pub const TICK_GRID: u32 = 4;

/// Lowest melody pitch representable after normalization (C3).
pub const MIN_PITCH: u8 = 48;

/// Highest melody pitch representable after normalization (B7).
pub const MAX_PITCH: u8 = 107;

/// Pitch classes of the C major scale.
pub const C_MAJOR_PITCH_CLASSES: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// A MIDI note number. 60 is middle C, written `C` in ABC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pitch(u8);

impl Pitch {
    pub fn new(midi: i32) -> Result<Self, ScoreError> {
        if (0..=127).contains(&midi) {
            Ok(Pitch(midi as u8))
        } else {
            Err(ScoreError::PitchOutOfRange(midi))
        }
    }

    pub fn midi(self) -> u8 {
        self.0
    }

    pub fn pitch_class(self) -> u8 {
        self.0 % 12
    }

    /// Whether the pitch lies in the melody range the vocabulary can encode.
    pub fn in_melody_range(self) -> bool {
        (MIN_PITCH..=MAX_PITCH).contains(&self.0)
    }
}

/// Shift a pitch by a signed number of semitones.
pub fn transpose_pitch(p: Pitch, shift: i32) -> Result<Pitch, ScoreError> {
    Pitch::new(p.0 as i32 + shift)
}

/// A positive duration measured in 1/192 whole-note ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Duration(u32);

impl Duration {
    pub fn new(ticks: u32) -> Result<Self, ScoreError> {
        if ticks == 0 {
            Err(ScoreError::ZeroDuration)
        } else {
            Ok(Duration(ticks))
        }
    }

    pub fn ticks(self) -> u32 {
        self.0
    }

    pub fn on_grid(self) -> bool {
        self.0.is_multiple_of(TICK_GRID)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Note(Pitch),
    Rest,
}

/// A single note or rest. Rests never carry a tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub kind: EventKind,
    pub duration: Duration,
    pub tied_to_next: bool,
}

impl NoteEvent {
    pub fn note(pitch: Pitch, duration: Duration) -> Self {
        NoteEvent {
            kind: EventKind::Note(pitch),
            duration,
            tied_to_next: false,
        }
    }

    pub fn tied_note(pitch: Pitch, duration: Duration) -> Self {
        NoteEvent {
            kind: EventKind::Note(pitch),
            duration,
            tied_to_next: true,
        }
    }

    pub fn rest(duration: Duration) -> Self {
        NoteEvent {
            kind: EventKind::Rest,
            duration,
            tied_to_next: false,
        }
    }

    pub fn pitch(&self) -> Option<Pitch> {
        match self.kind {
            EventKind::Note(p) => Some(p),
            EventKind::Rest => None,
        }
    }

    pub fn is_rest(&self) -> bool {
        matches!(self.kind, EventKind::Rest)
    }

    pub fn ticks(&self) -> u32 {
        self.duration.ticks()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordQuality {
    Maj,
    Min,
    Dom7,
    Min7,
    Maj7,
    Dim,
    Aug,
    Sus4,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 8] = [
        ChordQuality::Maj,
        ChordQuality::Min,
        ChordQuality::Dom7,
        ChordQuality::Min7,
        ChordQuality::Maj7,
        ChordQuality::Dim,
        ChordQuality::Aug,
        ChordQuality::Sus4,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Dom7 => "dom7",
            ChordQuality::Min7 => "min7",
            ChordQuality::Maj7 => "maj7",
            ChordQuality::Dim => "dim",
            ChordQuality::Aug => "aug",
            ChordQuality::Sus4 => "sus4",
        }
    }

    /// Semitone intervals above the root for a root-position voicing.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordQuality::Maj => &[0, 4, 7],
            ChordQuality::Min => &[0, 3, 7],
            ChordQuality::Dom7 => &[0, 4, 7, 10],
            ChordQuality::Min7 => &[0, 3, 7, 10],
            ChordQuality::Maj7 => &[0, 4, 7, 11],
            ChordQuality::Dim => &[0, 3, 6],
            ChordQuality::Aug => &[0, 4, 8],
            ChordQuality::Sus4 => &[0, 5, 7],
        }
    }
}

/// A chord symbol such as `Am` or `G7`, anchored at a tick offset inside its measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordSymbol {
    /// Pitch class of the root, 0 = C.
    pub root: u8,
    pub quality: ChordQuality,
    pub onset: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Measure {
    pub events: Vec<NoteEvent>,
    pub chords: Vec<ChordSymbol>,
}

impl Measure {
    pub fn new(events: Vec<NoteEvent>, chords: Vec<ChordSymbol>) -> Self {
        Measure { events, chords }
    }

    /// Tick offset at which each event starts.
    pub fn onsets(&self) -> Vec<u32> {
        let mut t = 0;
        self.events
            .iter()
            .map(|e| {
                let start = t;
                t += e.ticks();
                start
            })
            .collect()
    }

    pub fn notes(&self) -> impl Iterator<Item = Pitch> + '_ {
        self.events.iter().filter_map(NoteEvent::pitch)
    }
}

/// Sum of all event durations in a measure.
pub fn measure_tick_sum(m: &Measure) -> u32 {
    m.events.iter().map(NoteEvent::ticks).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySignature {
    pub tonic: u8,
    pub mode: Mode,
}

impl KeySignature {
    pub const C_MAJOR: KeySignature = KeySignature {
        tonic: 0,
        mode: Mode::Major,
    };
}

/// Time signature as written in the `M:` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Meter {
    pub beats: u32,
    pub unit: u32,
}

impl Meter {
    pub const COMMON: Meter = Meter { beats: 4, unit: 4 };
}

impl fmt::Display for Meter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.beats, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Score {
    pub key: KeySignature,
    pub meter: Meter,
    pub measures: Vec<Measure>,
    pub source_id: String,
}

impl Score {
    /// An empty C major 4/4 score.
    pub fn empty(source_id: impl Into<String>) -> Self {
        Score {
            key: KeySignature::C_MAJOR,
            meter: Meter::COMMON,
            measures: Vec::new(),
            source_id: source_id.into(),
        }
    }

    pub fn total_ticks(&self) -> u64 {
        self.measures
            .iter()
            .map(|m| measure_tick_sum(m) as u64)
            .sum()
    }

    /// Checks every normalized-score invariant and reports the first violation.
    pub fn check_normalized(&self) -> Result<(), ScoreError> {
        if self.key != KeySignature::C_MAJOR {
            return Err(ScoreError::NotNormalized("key is not C major".into()));
        }
        if self.meter != Meter::COMMON {
            return Err(ScoreError::NotNormalized(format!(
                "meter {} is not 4/4",
                self.meter
            )));
        }
        for (mi, m) in self.measures.iter().enumerate() {
            for (ei, e) in m.events.iter().enumerate() {
                if !e.duration.on_grid() || e.ticks() > TICKS_PER_MEASURE {
                    return Err(ScoreError::BadEvent {
                        measure: mi,
                        event: ei,
                        reason: format!("duration {} ticks is off the grid", e.ticks()),
                    });
                }
                if let Some(p) = e.pitch() {
                    if !p.in_melody_range() {
                        return Err(ScoreError::BadEvent {
                            measure: mi,
                            event: ei,
                            reason: format!("pitch {} outside {MIN_PITCH}..={MAX_PITCH}", p.midi()),
                        });
                    }
                } else if e.tied_to_next {
                    return Err(ScoreError::BadEvent {
                        measure: mi,
                        event: ei,
                        reason: "tied rest".into(),
                    });
                }
            }
            let sum = measure_tick_sum(m);
            if sum != TICKS_PER_MEASURE {
                return Err(ScoreError::NotNormalized(format!(
                    "measure {mi} sums to {sum} ticks"
                )));
            }
            let onsets = m.onsets();
            let mut last: Option<u32> = None;
            for c in &m.chords {
                if c.root > 11 || !onsets.contains(&c.onset) || last.is_some_and(|l| c.onset <= l) {
                    return Err(ScoreError::NotNormalized(format!(
                        "measure {mi} has a misplaced chord at tick {}",
                        c.onset
                    )));
                }
                last = Some(c.onset);
            }
        }
        Ok(())
    }
}
