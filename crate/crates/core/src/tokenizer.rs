//! The fixed 135-symbol score vocabulary and lossless encode/decode of normalized scores.
//!
//! Id layout:
//!
//! | ids      | symbols                                   |
//! |----------|-------------------------------------------|
//! | 0..=3    | `PAD BOS EOS UNK`                         |
//! | 4..=6    | `BAR REST TIE`                            |
//! | 7..=66   | `PITCH_48` .. `PITCH_107`                 |
//! | 67..=78  | `ROOT_C` .. `ROOT_B`                      |
//! | 79..=86  | `QUAL_maj` .. `QUAL_sus4`                 |
//! | 87..=134 | `DUR_4` .. `DUR_192` in steps of 4 ticks  |
//!
//! Chords carry no duration of their own; a chord is written just before the event at its
//! onset and holds until the next chord or bar.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::TokenError;
use crate::score::{
    ChordQuality, ChordSymbol, Duration, EventKind, Measure, NoteEvent, Pitch, Score, MAX_PITCH,
    MIN_PITCH, TICKS_PER_MEASURE, TICK_GRID,
};

pub const VOCAB_SIZE: usize = 135;

pub const PAD: TokenId = TokenId(0);
pub const BOS: TokenId = TokenId(1);
pub const EOS: TokenId = TokenId(2);
pub const UNK: TokenId = TokenId(3);
pub const BAR: TokenId = TokenId(4);
pub const REST: TokenId = TokenId(5);
pub const TIE: TokenId = TokenId(6);

const PITCH_BASE: u16 = 7;
const ROOT_BASE: u16 = PITCH_BASE + (MAX_PITCH - MIN_PITCH + 1) as u16;
const QUAL_BASE: u16 = ROOT_BASE + 12;
const DUR_BASE: u16 = QUAL_BASE + 8;
const DUR_COUNT: u16 = (TICKS_PER_MEASURE / TICK_GRID) as u16;
const _: () = assert!(DUR_BASE as usize + DUR_COUNT as usize == VOCAB_SIZE);

const ROOT_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(u16);

impl TokenId {
    pub fn new(id: u32) -> Result<Self, TokenError> {
        if (id as usize) < VOCAB_SIZE {
            Ok(TokenId(id as u16))
        } else {
            Err(TokenError::IdOutOfRange(id))
        }
    }

    pub fn id(self) -> u16 {
        self.0
    }

    pub fn pitch(p: Pitch) -> Option<Self> {
        p.in_melody_range()
            .then(|| TokenId(PITCH_BASE + (p.midi() - MIN_PITCH) as u16))
    }

    pub fn root(pc: u8) -> Option<Self> {
        (pc < 12).then(|| TokenId(ROOT_BASE + pc as u16))
    }

    pub fn quality(q: ChordQuality) -> Self {
        TokenId(QUAL_BASE + q.index() as u16)
    }

    pub fn duration(ticks: u32) -> Option<Self> {
        (ticks > 0 && ticks <= TICKS_PER_MEASURE && ticks.is_multiple_of(TICK_GRID))
            .then(|| TokenId(DUR_BASE + (ticks / TICK_GRID - 1) as u16))
    }

    pub fn symbol(self) -> Symbol {
        let id = self.0;
        match id {
            0 => Symbol::Pad,
            1 => Symbol::Bos,
            2 => Symbol::Eos,
            3 => Symbol::Unk,
            4 => Symbol::Bar,
            5 => Symbol::Rest,
            6 => Symbol::Tie,
            _ if id < ROOT_BASE => Symbol::Pitch(MIN_PITCH + (id - PITCH_BASE) as u8),
            _ if id < QUAL_BASE => Symbol::Root((id - ROOT_BASE) as u8),
            _ if id < DUR_BASE => Symbol::Quality(ChordQuality::ALL[(id - QUAL_BASE) as usize]),
            _ => Symbol::Duration((id - DUR_BASE + 1) as u32 * TICK_GRID),
        }
    }
}

/// Decoded meaning of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Pad,
    Bos,
    Eos,
    Unk,
    Bar,
    Rest,
    Tie,
    Pitch(u8),
    Root(u8),
    Quality(ChordQuality),
    Duration(u32),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Pad => f.write_str("PAD"),
            Symbol::Bos => f.write_str("BOS"),
            Symbol::Eos => f.write_str("EOS"),
            Symbol::Unk => f.write_str("UNK"),
            Symbol::Bar => f.write_str("BAR"),
            Symbol::Rest => f.write_str("REST"),
            Symbol::Tie => f.write_str("TIE"),
            Symbol::Pitch(p) => write!(f, "PITCH_{p}"),
            Symbol::Root(r) => write!(f, "ROOT_{}", ROOT_NAMES[*r as usize]),
            Symbol::Quality(q) => write!(f, "QUAL_{}", q.name()),
            Symbol::Duration(d) => write!(f, "DUR_{d}"),
        }
    }
}

/// The symbol table, indexed by id, with a reverse lookup by name.
#[derive(Debug)]
pub struct Vocabulary {
    names: Vec<String>,
    ids: HashMap<String, TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub id: u16,
    pub symbol: String,
}

impl Vocabulary {
    fn build() -> Self {
        let names: Vec<String> = (0..VOCAB_SIZE as u16)
            .map(|id| TokenId(id).symbol().to_string())
            .collect();
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), TokenId(i as u16)))
            .collect();
        Vocabulary { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn symbol_of(&self, id: TokenId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn id_of(&self, symbol: &str) -> Option<TokenId> {
        self.ids.get(symbol).copied()
    }

    pub fn entries(&self) -> Vec<VocabEntry> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, s)| VocabEntry {
                id: i as u16,
                symbol: s.clone(),
            })
            .collect()
    }

    /// JSON array of `{id, symbol}` objects in id order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("vocabulary serializes")
    }
}

/// The shared vocabulary instance.
pub fn vocabulary() -> &'static Vocabulary {
    static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
    VOCAB.get_or_init(Vocabulary::build)
}

/// Encodes a normalized score into token ids.
pub fn encode(score: &Score) -> Result<Vec<TokenId>, TokenError> {
    score.check_normalized()?;
    let mut out = vec![BOS];
    for m in &score.measures {
        let mut chords = m.chords.iter().peekable();
        let mut t = 0;
        for e in &m.events {
            while let Some(c) = chords.next_if(|c| c.onset <= t) {
                out.push(TokenId::root(c.root).expect("checked root"));
                out.push(TokenId::quality(c.quality));
            }
            match e.kind {
                EventKind::Note(p) => out.push(TokenId::pitch(p).expect("checked range")),
                EventKind::Rest => out.push(REST),
            }
            out.push(TokenId::duration(e.ticks()).expect("checked grid"));
            if e.tied_to_next {
                out.push(TIE);
            }
            t += e.ticks();
        }
        out.push(BAR);
    }
    out.push(EOS);
    Ok(out)
}

/// What [`decode`] had to do to turn an arbitrary sequence into a valid score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Tokens ignored because they did not fit the grammar at their position.
    pub dropped: usize,
    /// Measures shorter than 192 ticks that were filled with a rest.
    pub padded: usize,
    /// Measures longer than 192 ticks that were cut.
    pub truncated: usize,
    /// Trailing events closed into a measure without a `BAR`.
    pub unterminated: usize,
}

impl RecoveryReport {
    pub fn is_clean(&self) -> bool {
        *self == RecoveryReport::default()
    }
}

enum Pending {
    Note(Pitch),
    Rest,
}

#[derive(Default)]
struct MeasureBuilder {
    events: Vec<NoteEvent>,
    chords: Vec<ChordSymbol>,
    position: u32,
}

impl MeasureBuilder {
    fn finish(self, report: &mut RecoveryReport) -> Measure {
        let MeasureBuilder {
            mut events,
            mut chords,
            position,
        } = self;
        if position > TICKS_PER_MEASURE {
            report.truncated += 1;
            let mut kept = Vec::new();
            let mut t = 0;
            for mut e in events {
                if t >= TICKS_PER_MEASURE {
                    break;
                }
                let room = TICKS_PER_MEASURE - t;
                if e.ticks() > room {
                    e.duration = Duration::new(room).expect("room is positive");
                    e.tied_to_next = false;
                }
                t += e.ticks();
                kept.push(e);
            }
            events = kept;
            chords.retain(|c| c.onset < TICKS_PER_MEASURE);
        } else if position < TICKS_PER_MEASURE {
            report.padded += 1;
            events.push(NoteEvent::rest(
                Duration::new(TICKS_PER_MEASURE - position).expect("positive padding"),
            ));
        }
        Measure::new(events, chords)
    }
}

/// Decodes any token sequence into a normalized score, repairing what it must.
///
/// Well-formed output of [`encode`] decodes to the original score with a clean report.
pub fn decode(tokens: &[TokenId]) -> (Score, RecoveryReport) {
    let mut report = RecoveryReport::default();
    let mut score = Score::empty("");
    let mut measure = MeasureBuilder::default();
    let mut pending: Option<Pending> = None;
    let mut pending_root: Option<u8> = None;
    let mut pending_chord: Option<(u8, ChordQuality)> = None;

    let drop_pending = |pending: &mut Option<Pending>,
                        root: &mut Option<u8>,
                        chord: &mut Option<(u8, ChordQuality)>,
                        report: &mut RecoveryReport| {
        report.dropped += pending.take().is_some() as usize
            + root.take().is_some() as usize
            + chord.take().is_some() as usize * 2;
    };

    for (i, &tok) in tokens.iter().enumerate() {
        match tok.symbol() {
            Symbol::Pad => {}
            Symbol::Bos if i == 0 => {}
            Symbol::Bos | Symbol::Unk => report.dropped += 1,
            Symbol::Eos => break,
            Symbol::Pitch(p) => {
                report.dropped += pending.is_some() as usize;
                pending = Some(Pending::Note(
                    Pitch::new(p as i32).expect("vocabulary pitch"),
                ));
            }
            Symbol::Rest => {
                report.dropped += pending.is_some() as usize;
                pending = Some(Pending::Rest);
            }
            Symbol::Duration(d) => {
                let Some(kind) = pending.take() else {
                    report.dropped += 1;
                    continue;
                };
                if let Some((root, quality)) = pending_chord.take() {
                    if measure.position < TICKS_PER_MEASURE {
                        measure.chords.push(ChordSymbol {
                            root,
                            quality,
                            onset: measure.position,
                        });
                    } else {
                        report.dropped += 2;
                    }
                }
                let duration = Duration::new(d).expect("vocabulary duration");
                measure.events.push(match kind {
                    Pending::Note(p) => NoteEvent::note(p, duration),
                    Pending::Rest => NoteEvent::rest(duration),
                });
                measure.position += d;
            }
            Symbol::Tie => match measure.events.last_mut() {
                Some(e) if !e.is_rest() && !e.tied_to_next && pending.is_none() => {
                    e.tied_to_next = true
                }
                _ => report.dropped += 1,
            },
            Symbol::Root(r) => {
                report.dropped += pending_root.is_some() as usize;
                pending_root = Some(r);
            }
            Symbol::Quality(q) => match pending_root.take() {
                Some(r) => {
                    // A second chord before any event replaces the first.
                    report.dropped += 2 * pending_chord.is_some() as usize;
                    pending_chord = Some((r, q));
                }
                None => report.dropped += 1,
            },
            Symbol::Bar => {
                drop_pending(
                    &mut pending,
                    &mut pending_root,
                    &mut pending_chord,
                    &mut report,
                );
                score
                    .measures
                    .push(std::mem::take(&mut measure).finish(&mut report));
            }
        }
    }
    drop_pending(
        &mut pending,
        &mut pending_root,
        &mut pending_chord,
        &mut report,
    );
    if !measure.events.is_empty() {
        report.unterminated += 1;
        score.measures.push(measure.finish(&mut report));
    }
    (score, report)
}

/// Space-separated symbol names.
pub fn render_token_text(tokens: &[TokenId]) -> String {
    let vocab = vocabulary();
    tokens
        .iter()
        .map(|&t| vocab.symbol_of(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Converts raw integer ids to tokens, rejecting anything outside the vocabulary.
pub fn tokens_from_ids(ids: &[u32]) -> Result<Vec<TokenId>, TokenError> {
    ids.iter().map(|&id| TokenId::new(id)).collect()
}

pub fn parse_token_text(text: &str) -> Result<Vec<TokenId>, TokenError> {
    let vocab = vocabulary();
    text.split_whitespace()
        .map(|s| {
            vocab
                .id_of(s)
                .ok_or_else(|| TokenError::UnknownSymbol(s.to_owned()))
        })
        .collect()
}

/// Little-endian 16-bit ids.
pub fn tokens_to_bytes(tokens: &[TokenId]) -> Vec<u8> {
    tokens.iter().flat_map(|t| t.0.to_le_bytes()).collect()
}

pub fn tokens_from_bytes(bytes: &[u8]) -> Result<Vec<TokenId>, TokenError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(TokenError::OddBinaryLength(bytes.len()));
    }
    bytes
        .chunks_exact(2)
        .map(|b| TokenId::new(u16::from_le_bytes([b[0], b[1]]) as u32))
        .collect()
}
