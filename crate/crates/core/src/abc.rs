//! Reading and writing the single-voice ABC subset used by the corpus.
//!
//! Supported: headers `X T C M L K Q` (plus the ignorable `Z N O R S W w`), note letters with
//! octave marks, accidentals `^ _ =` with measure-scoped propagation, integer and `/n` lengths,
//! rests `z`, bar lines, ties `-`, quoted chord symbols and `(3` triplets. Slur parentheses are
//! skipped; anything else is rejected with its line and column.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::AbcError;
use crate::score::{
    ChordQuality, ChordSymbol, Duration, EventKind, KeySignature, Measure, Meter, Mode, NoteEvent,
    Pitch, Score, TICKS_PER_MEASURE, TICK_GRID,
};

/// Header letters removed by [`strip_metadata`].
pub const METADATA_HEADERS: [char; 9] = ['T', 'C', 'Z', 'N', 'O', 'R', 'S', 'W', 'w'];

/// Header letters the parser understands.
pub const PARSED_HEADERS: [char; 7] = ['X', 'T', 'C', 'M', 'L', 'K', 'Q'];

const DEFAULT_UNIT: (u32, u32) = (1, 8);

fn header_letter(line: &str) -> Option<char> {
    let mut chars = line.chars();
    let letter = chars.next()?;
    (letter.is_ascii_alphabetic() && chars.next() == Some(':')).then_some(letter)
}

/// Drops metadata header lines and inline ornaments (`~`, `!...!`, `{...}` grace groups).
pub fn strip_metadata(text: &str) -> String {
    let mut kept = Vec::new();
    for line in text.split('\n') {
        match header_letter(line) {
            Some(letter) if METADATA_HEADERS.contains(&letter) => {}
            Some(_) => kept.push(line.to_owned()),
            None if line.trim_start().starts_with('%') => kept.push(line.to_owned()),
            None => {
                // Stripping can expose a header, e.g. `!N:`.
                let stripped = strip_ornaments(line);
                match header_letter(&stripped) {
                    Some(letter) if METADATA_HEADERS.contains(&letter) => {}
                    _ => kept.push(stripped),
                }
            }
        }
    }
    kept.join("\n")
}

fn strip_ornaments(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                out.push(c);
                for q in chars.by_ref() {
                    out.push(q);
                    if q == '"' {
                        break;
                    }
                }
            }
            '~' => {}
            '!' => {
                // Unterminated `!` deletes only itself.
                let rest: String = chars.clone().collect();
                if let Some(end) = rest.find('!') {
                    for _ in 0..rest[..end].chars().count() + 1 {
                        chars.next();
                    }
                }
            }
            '{' => {
                for g in chars.by_ref() {
                    if g == '}' {
                        break;
                    }
                }
            }
            '%' => {
                out.push(c);
                out.extend(chars.by_ref());
            }
            _ => out.push(c),
        }
    }
    out
}

/// A tune split into its header fields and raw music lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbcDocument {
    pub headers: BTreeMap<char, String>,
    /// Music lines with their 1-based line numbers.
    pub body_lines: Vec<(usize, String)>,
}

impl AbcDocument {
    pub fn parse(text: &str) -> Result<Self, AbcError> {
        let mut headers = BTreeMap::new();
        let mut body_lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('%') {
                continue;
            }
            if let Some(letter) = header_letter(line) {
                if !PARSED_HEADERS.contains(&letter) && !METADATA_HEADERS.contains(&letter) {
                    return Err(AbcError::at(
                        line_no,
                        1,
                        format!("unknown header {letter}:"),
                    ));
                }
                if !body_lines.is_empty() && matches!(letter, 'K' | 'M' | 'L') {
                    return Err(AbcError::at(
                        line_no,
                        1,
                        format!("inline {letter}: changes are not supported"),
                    ));
                }
                if PARSED_HEADERS.contains(&letter) {
                    headers
                        .entry(letter)
                        .or_insert_with(|| line[2..].trim().to_owned());
                }
                continue;
            }
            body_lines.push((line_no, line.to_owned()));
        }
        if !headers.contains_key(&'K') {
            return Err(AbcError::at(1, 1, "missing K: header"));
        }
        if body_lines.is_empty() {
            return Err(AbcError::at(1, 1, "no music lines"));
        }
        Ok(AbcDocument {
            headers,
            body_lines,
        })
    }
}

fn letter_offset(letter: char) -> Option<i32> {
    Some(match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    })
}

/// Position of a natural tonic on the circle of fifths relative to C.
fn letter_fifths(letter: char) -> i32 {
    match letter {
        'F' => -1,
        'C' => 0,
        'G' => 1,
        'D' => 2,
        'A' => 3,
        'E' => 4,
        'B' => 5,
        _ => unreachable!(),
    }
}

/// A parsed `K:` field: the tonal centre plus the per-letter alterations it implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyField {
    pub key: KeySignature,
    pub alterations: HashMap<char, i32>,
}

pub fn parse_key(field: &str) -> Result<KeyField, String> {
    let mut chars = field.trim().chars().peekable();
    let letter = chars
        .next()
        .map(|c| c.to_ascii_uppercase())
        .filter(|c| ('A'..='G').contains(c))
        .ok_or_else(|| format!("unrecognized key {field:?}"))?;
    let acc = match chars.peek() {
        Some('#') => {
            chars.next();
            1
        }
        Some('b') => {
            chars.next();
            -1
        }
        _ => 0,
    };
    let mode_text: String = chars.collect::<String>().trim().to_ascii_lowercase();
    let mode = match mode_text.as_str() {
        "" | "maj" | "major" | "ion" | "ionian" => Mode::Major,
        "m" | "min" | "minor" | "aeo" | "aeolian" => Mode::Minor,
        other => return Err(format!("unsupported key mode {other:?}")),
    };
    let mut fifths = letter_fifths(letter) + 7 * acc;
    if mode == Mode::Minor {
        fifths -= 3;
    }
    if !(-7..=7).contains(&fifths) {
        return Err(format!("key {field:?} needs double accidentals"));
    }
    let mut alterations = HashMap::new();
    if fifths > 0 {
        for l in ['F', 'C', 'G', 'D', 'A', 'E', 'B']
            .iter()
            .take(fifths as usize)
        {
            alterations.insert(*l, 1);
        }
    } else {
        for l in ['B', 'E', 'A', 'D', 'G', 'C', 'F']
            .iter()
            .take((-fifths) as usize)
        {
            alterations.insert(*l, -1);
        }
    }
    let tonic = (letter_offset(letter).unwrap() + acc).rem_euclid(12) as u8;
    Ok(KeyField {
        key: KeySignature { tonic, mode },
        alterations,
    })
}

fn parse_fraction(text: &str) -> Option<(u32, u32)> {
    let (n, d) = text.trim().split_once('/')?;
    let n: u32 = n.trim().parse().ok()?;
    let d: u32 = d.trim().parse().ok()?;
    (n > 0 && d > 0).then_some((n, d))
}

pub fn parse_meter(field: &str) -> Result<Meter, String> {
    match field.trim() {
        "C" => Ok(Meter::COMMON),
        "C|" => Ok(Meter { beats: 2, unit: 2 }),
        other => parse_fraction(other)
            .map(|(beats, unit)| Meter { beats, unit })
            .ok_or_else(|| format!("unrecognized meter {other:?}")),
    }
}

/// Parses a quoted chord symbol such as `Am`, `F#7`, `Bbmaj7` or `C/E` (bass ignored).
pub fn parse_chord_name(name: &str) -> Result<(u8, ChordQuality), String> {
    let mut chars = name.trim().chars().peekable();
    let letter = chars
        .next()
        .filter(|c| ('A'..='G').contains(c))
        .ok_or_else(|| format!("unknown chord root in {name:?}"))?;
    let mut root = letter_offset(letter).unwrap();
    match chars.peek() {
        Some('#') => {
            chars.next();
            root += 1;
        }
        Some('b') => {
            chars.next();
            root -= 1;
        }
        _ => {}
    }
    let rest: String = chars.collect();
    let quality_text = rest.split('/').next().unwrap_or("");
    let quality = match quality_text {
        "" | "maj" | "M" => ChordQuality::Maj,
        "m" | "min" | "-" => ChordQuality::Min,
        "7" | "dom7" => ChordQuality::Dom7,
        "m7" | "min7" | "-7" => ChordQuality::Min7,
        "maj7" | "M7" => ChordQuality::Maj7,
        "dim" | "o" | "°" => ChordQuality::Dim,
        "aug" | "+" => ChordQuality::Aug,
        "sus4" | "sus" => ChordQuality::Sus4,
        other => return Err(format!("unknown chord quality {other:?} in {name:?}")),
    };
    Ok((root.rem_euclid(12) as u8, quality))
}

struct BodyParser {
    unit: (u32, u32),
    key_alterations: HashMap<char, i32>,
    measures: Vec<Measure>,
    events: Vec<NoteEvent>,
    chords: Vec<ChordSymbol>,
    position: u32,
    /// Explicit accidentals in force for the current measure, keyed by natural MIDI pitch.
    accidentals: HashMap<i32, i32>,
    triplet_left: u32,
    triplet_start: (usize, usize),
}

impl BodyParser {
    fn close_measure(&mut self, line: usize, col: usize) -> Result<(), AbcError> {
        if self.triplet_left > 0 {
            return Err(AbcError::at(line, col, "triplet crosses a bar line"));
        }
        if !self.events.is_empty() || !self.chords.is_empty() {
            self.measures.push(Measure::new(
                std::mem::take(&mut self.events),
                std::mem::take(&mut self.chords),
            ));
        }
        self.position = 0;
        self.accidentals.clear();
        Ok(())
    }

    fn ticks(&self, num: u32, den: u32, triplet: bool) -> u32 {
        let (tn, td) = if triplet { (2u64, 3u64) } else { (1, 1) };
        let numer = TICKS_PER_MEASURE as u64 * self.unit.0 as u64 * num as u64 * tn;
        let denom = self.unit.1 as u64 * den as u64 * td;
        ((numer * 2 + denom) / (denom * 2)).max(1) as u32
    }

    fn push_event(&mut self, kind: EventKind, num: u32, den: u32) {
        let triplet = self.triplet_left > 0;
        if triplet {
            self.triplet_left -= 1;
        }
        let duration = Duration::new(self.ticks(num, den, triplet)).expect("ticks are at least 1");
        self.position += duration.ticks();
        self.events.push(NoteEvent {
            kind,
            duration,
            tied_to_next: false,
        });
    }

    fn parse_line(&mut self, line_no: usize, line: &str) -> Result<(), AbcError> {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        let err = |i: usize, msg: String| AbcError::at(line_no, i + 1, msg);
        while i < chars.len() {
            let c = chars[i];
            match c {
                ' ' | '\t' | '\\' | ')' => i += 1,
                '%' => break,
                '|' | ':' | '[' => {
                    let start = i;
                    if c == '[' {
                        if chars.get(i + 1) != Some(&'|') {
                            return Err(err(i, "unsupported '[' construct".into()));
                        }
                        i += 1;
                    }
                    while i < chars.len() && matches!(chars[i], '|' | ':' | ']') {
                        i += 1;
                    }
                    let colons = chars[start..i].iter().filter(|&&b| b == ':').count();
                    if !chars[start..i].contains(&'|') && colons < 2 {
                        return Err(err(start, "stray ':'".into()));
                    }
                    self.close_measure(line_no, start + 1)?;
                }
                '"' => {
                    let end = chars[i + 1..]
                        .iter()
                        .position(|&q| q == '"')
                        .ok_or_else(|| err(i, "unterminated chord string".into()))?;
                    let text: String = chars[i + 1..i + 1 + end].iter().collect();
                    if !text.starts_with(['^', '_', '<', '>', '@']) {
                        let (root, quality) = parse_chord_name(&text).map_err(|m| err(i, m))?;
                        self.chords.push(ChordSymbol {
                            root,
                            quality,
                            onset: self.position,
                        });
                    }
                    i += end + 2;
                }
                '(' => {
                    let digits: String = chars[i + 1..]
                        .iter()
                        .take_while(|d| d.is_ascii_digit())
                        .collect();
                    if digits.is_empty() {
                        i += 1;
                        continue;
                    }
                    if digits != "3" || chars.get(i + 2) == Some(&':') {
                        return Err(err(i, format!("unsupported tuplet ({digits}")));
                    }
                    if self.triplet_left > 0 {
                        return Err(err(i, "nested triplet".into()));
                    }
                    self.triplet_left = 3;
                    self.triplet_start = (line_no, i + 1);
                    i += 2;
                }
                '-' => {
                    match self.events.last_mut() {
                        Some(e) if !e.is_rest() => e.tied_to_next = true,
                        _ => return Err(err(i, "tie without a preceding note".into())),
                    }
                    i += 1;
                }
                'z' => {
                    i += 1;
                    let (num, den) = read_length(&chars, &mut i).map_err(|m| err(i, m))?;
                    self.push_event(EventKind::Rest, num, den);
                }
                '^' | '_' | '=' | 'A'..='G' | 'a'..='g' => {
                    let start = i;
                    let mut explicit: Option<i32> = None;
                    while i < chars.len() && matches!(chars[i], '^' | '_' | '=') {
                        let step = match chars[i] {
                            '^' => 1,
                            '_' => -1,
                            _ => 0,
                        };
                        explicit = Some(if step == 0 {
                            0
                        } else {
                            explicit.unwrap_or(0) + step
                        });
                        i += 1;
                    }
                    let letter = *chars
                        .get(i)
                        .filter(|l| l.is_ascii_alphabetic())
                        .ok_or_else(|| err(start, "accidental without a note".into()))?;
                    let base = letter_offset(letter)
                        .ok_or_else(|| err(i, format!("unresolvable note letter {letter:?}")))?;
                    let mut natural = 60 + base + if letter.is_ascii_lowercase() { 12 } else { 0 };
                    i += 1;
                    while i < chars.len() && matches!(chars[i], '\'' | ',') {
                        natural += if chars[i] == '\'' { 12 } else { -12 };
                        i += 1;
                    }
                    let alteration = match explicit {
                        Some(a) => {
                            self.accidentals.insert(natural, a);
                            a
                        }
                        None => match self.accidentals.get(&natural) {
                            Some(&a) => a,
                            None => *self
                                .key_alterations
                                .get(&letter.to_ascii_uppercase())
                                .unwrap_or(&0),
                        },
                    };
                    let pitch =
                        Pitch::new(natural + alteration).map_err(|e| err(start, e.to_string()))?;
                    let (num, den) = read_length(&chars, &mut i).map_err(|m| err(i, m))?;
                    self.push_event(EventKind::Note(pitch), num, den);
                }
                other => return Err(err(i, format!("unsupported symbol {other:?}"))),
            }
        }
        Ok(())
    }
}

fn read_number(chars: &[char], i: &mut usize) -> Option<u32> {
    let start = *i;
    while *i < chars.len() && chars[*i].is_ascii_digit() {
        *i += 1;
    }
    if *i == start {
        return None;
    }
    chars[start..*i].iter().collect::<String>().parse().ok()
}

fn read_length(chars: &[char], i: &mut usize) -> Result<(u32, u32), String> {
    let num = read_number(chars, i).unwrap_or(1);
    let mut den = 1u32;
    while *i < chars.len() && chars[*i] == '/' {
        *i += 1;
        den = den
            .checked_mul(read_number(chars, i).unwrap_or(2))
            .ok_or("note length denominator overflows")?;
    }
    if num == 0 || den == 0 {
        return Err("zero note length".into());
    }
    Ok((num, den))
}

/// Parses one tune into a [`Score`] with durations in ticks relative to `L:`.
pub fn parse_abc(text: &str) -> Result<Score, AbcError> {
    let doc = AbcDocument::parse(text)?;
    let key_line = |letter: char| {
        text.lines()
            .position(|l| header_letter(l) == Some(letter))
            .map_or(1, |p| p + 1)
    };
    let key = parse_key(&doc.headers[&'K']).map_err(|m| AbcError::at(key_line('K'), 3, m))?;
    let meter = match doc.headers.get(&'M') {
        Some(m) => parse_meter(m).map_err(|e| AbcError::at(key_line('M'), 3, e))?,
        None => Meter::COMMON,
    };
    let unit = match doc.headers.get(&'L') {
        Some(l) => parse_fraction(l).ok_or_else(|| {
            AbcError::at(key_line('L'), 3, format!("unrecognized unit length {l:?}"))
        })?,
        None => DEFAULT_UNIT,
    };
    let mut parser = BodyParser {
        unit,
        key_alterations: key.alterations,
        measures: Vec::new(),
        events: Vec::new(),
        chords: Vec::new(),
        position: 0,
        accidentals: HashMap::new(),
        triplet_left: 0,
        triplet_start: (0, 0),
    };
    for (line_no, line) in &doc.body_lines {
        parser.parse_line(*line_no, line)?;
    }
    if parser.triplet_left > 0 {
        let (l, c) = parser.triplet_start;
        return Err(AbcError::at(l, c, "triplet has fewer than three notes"));
    }
    let last = doc.body_lines.last().map_or(1, |(n, _)| *n);
    parser.close_measure(last, 1)?;
    Ok(Score {
        key: key.key,
        meter,
        measures: parser.measures,
        source_id: doc.headers.get(&'X').cloned().unwrap_or_default(),
    })
}

const ROOT_NAMES: [&str; 12] = [
    "C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B",
];

pub fn chord_name(root: u8, quality: ChordQuality) -> String {
    let suffix = match quality {
        ChordQuality::Maj => "",
        ChordQuality::Min => "m",
        ChordQuality::Dom7 => "7",
        ChordQuality::Min7 => "m7",
        ChordQuality::Maj7 => "maj7",
        ChordQuality::Dim => "dim",
        ChordQuality::Aug => "aug",
        ChordQuality::Sus4 => "sus4",
    };
    format!("{}{}", ROOT_NAMES[root as usize % 12], suffix)
}

/// Spelling of a MIDI pitch in C major: (letter, alteration), black keys as sharps.
fn spell(midi: u8) -> (char, i32) {
    const SPELLING: [(char, i32); 12] = [
        ('C', 0),
        ('C', 1),
        ('D', 0),
        ('D', 1),
        ('E', 0),
        ('F', 0),
        ('F', 1),
        ('G', 0),
        ('G', 1),
        ('A', 0),
        ('A', 1),
        ('B', 0),
    ];
    SPELLING[midi as usize % 12]
}

fn write_pitch(out: &mut String, midi: u8, accidentals: &mut HashMap<i32, i32>) {
    let (letter, alteration) = spell(midi);
    let natural = midi as i32 - alteration;
    let current = accidentals.get(&natural).copied().unwrap_or(0);
    if current != alteration {
        out.push(if alteration == 1 { '^' } else { '=' });
        accidentals.insert(natural, alteration);
    }
    let octave = natural.div_euclid(12) - 5;
    if octave >= 1 {
        out.push(letter.to_ascii_lowercase());
        for _ in 1..octave {
            out.push('\'');
        }
    } else {
        out.push(letter);
        for _ in octave..0 {
            out.push(',');
        }
    }
}

/// Serializes a normalized score as `K:C`, `M:4/4`, `L:1/192` plus one line per measure.
pub fn write_abc(score: &Score) -> Result<String, AbcError> {
    if score.key != KeySignature::C_MAJOR || score.meter != Meter::COMMON {
        return Err(AbcError::Serialize("score is not in C major 4/4".into()));
    }
    let mut out = String::new();
    if !score.source_id.is_empty() {
        writeln!(out, "X:{}", score.source_id).unwrap();
    }
    out.push_str("K:C\nM:4/4\nL:1/192");
    for (mi, m) in score.measures.iter().enumerate() {
        out.push('\n');
        let onsets = m.onsets();
        if let Some(c) = m.chords.iter().find(|c| !onsets.contains(&c.onset)) {
            return Err(AbcError::Serialize(format!(
                "measure {mi}: chord at tick {} does not start an event",
                c.onset
            )));
        }
        let mut accidentals = HashMap::new();
        for (ei, (e, &onset)) in m.events.iter().zip(&onsets).enumerate() {
            if e.ticks() % TICK_GRID != 0 {
                return Err(AbcError::Serialize(format!(
                    "measure {mi}, event {ei}: {} ticks is off the 4-tick grid",
                    e.ticks()
                )));
            }
            for c in m.chords.iter().filter(|c| c.onset == onset) {
                write!(out, "\"{}\"", chord_name(c.root, c.quality)).unwrap();
            }
            match e.kind {
                EventKind::Note(p) => write_pitch(&mut out, p.midi(), &mut accidentals),
                EventKind::Rest => out.push('z'),
            }
            write!(out, "{}", e.ticks()).unwrap();
            if e.tied_to_next {
                out.push('-');
            }
        }
        out.push('|');
    }
    Ok(out)
}
