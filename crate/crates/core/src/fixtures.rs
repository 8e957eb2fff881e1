//! Seeded random inputs for tests, fuzzing and benchmarks.

use rand::Rng as _;

use crate::rng::Rng;
use crate::score::{
    ChordQuality, ChordSymbol, Duration, KeySignature, Measure, Mode, NoteEvent, Pitch, Score,
    MAX_PITCH, MIN_PITCH, TICKS_PER_MEASURE, TICK_GRID,
};

const DURATIONS: [u32; 8] = [8, 12, 16, 24, 32, 48, 96, 192];

/// A single 192-tick measure with grid durations, occasional rests, ties and chords.
pub fn random_measure(rng: &mut Rng) -> Measure {
    let mut events = Vec::new();
    let mut left = TICKS_PER_MEASURE;
    while left > 0 {
        let ticks = if rng.random_bool(0.1) {
            // Any grid value, not only the common ones.
            TICK_GRID * rng.random_range(1..=left / TICK_GRID)
        } else {
            let fits: Vec<u32> = DURATIONS.iter().copied().filter(|&d| d <= left).collect();
            fits.get(rng.random_range(0..fits.len().max(1)))
                .copied()
                .unwrap_or(left)
        };
        let ticks = ticks.min(left);
        let d = Duration::new(ticks).expect("positive");
        let event = if rng.random_bool(0.15) {
            NoteEvent::rest(d)
        } else {
            let p = Pitch::new(rng.random_range(MIN_PITCH as i32..=MAX_PITCH as i32))
                .expect("in range");
            if rng.random_bool(0.1) {
                NoteEvent::tied_note(p, d)
            } else {
                NoteEvent::note(p, d)
            }
        };
        events.push(event);
        left -= ticks;
    }
    let mut chords = Vec::new();
    let mut onset = 0;
    for e in &events {
        if rng.random_bool(0.3) {
            chords.push(ChordSymbol {
                root: rng.random_range(0..12),
                quality: ChordQuality::ALL[rng.random_range(0..ChordQuality::ALL.len())],
                onset,
            });
        }
        onset += e.ticks();
    }
    Measure::new(events, chords)
}

/// A score that satisfies [`Score::check_normalized`].
pub fn random_normalized_score(rng: &mut Rng, measures: usize, id: &str) -> Score {
    Score {
        measures: (0..measures).map(|_| random_measure(rng)).collect(),
        ..Score::empty(id)
    }
}

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];
const FLAT_NAMES: [&str; 12] = [
    "C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B",
];

/// ABC `K:` spelling of a key, respecting the seven-accidental limit.
pub fn key_field(key: KeySignature) -> String {
    let relative_major = match key.mode {
        Mode::Major => key.tonic as i32,
        Mode::Minor => key.tonic as i32 + 3,
    };
    let fifths = (relative_major * 7).rem_euclid(12);
    // Sharp spellings up to six sharps, flat spellings beyond.
    let name = if fifths <= 6 {
        SHARP_NAMES[key.tonic as usize]
    } else {
        FLAT_NAMES[key.tonic as usize]
    };
    match key.mode {
        Mode::Major => name.to_string(),
        Mode::Minor => format!("{name}m"),
    }
}

/// An ABC tune in a random key with `bars` measures of eighth-note based rhythm.
pub fn random_abc_tune(rng: &mut Rng, index: usize, bars: usize) -> String {
    let key = KeySignature {
        tonic: rng.random_range(0..12),
        mode: if rng.random_bool(0.3) {
            Mode::Minor
        } else {
            Mode::Major
        },
    };
    let letters = [
        "C", "D", "E", "F", "G", "A", "B", "c", "d", "e", "f", "g", "a", "b",
    ];
    let chords = ["C", "Dm", "Em", "F", "G7", "Am", "Bdim", "Cmaj7", "Gsus4"];
    let mut body = String::new();
    for _ in 0..bars {
        let mut left = 8;
        while left > 0 {
            let len = [1, 1, 2, 2, 3, 4][rng.random_range(0..6)].min(left);
            if rng.random_bool(0.25) {
                body.push_str(&format!(
                    "\"{}\"",
                    chords[rng.random_range(0..chords.len())]
                ));
            }
            if rng.random_bool(0.1) {
                body.push('z');
            } else {
                if rng.random_bool(0.05) {
                    body.push('^');
                }
                body.push_str(letters[rng.random_range(0..letters.len())]);
            }
            if len > 1 {
                body.push_str(&len.to_string());
            }
            left -= len;
        }
        body.push('|');
    }
    format!(
        "X:{index}\nT:Random tune {index}\nC:Generator\nM:4/4\nL:1/8\nK:{}\n{body}\n",
        key_field(key)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::parse_abc;
    use crate::rng::seeded;

    #[test]
    fn generated_scores_are_normalized() {
        let mut rng = seeded(1);
        for _ in 0..200 {
            random_normalized_score(&mut rng, 4, "x")
                .check_normalized()
                .unwrap();
        }
    }

    #[test]
    fn key_fields_parse_back() {
        for tonic in 0..12 {
            for mode in [Mode::Major, Mode::Minor] {
                let key = KeySignature { tonic, mode };
                let text = format!("K:{}\nC|", key_field(key));
                assert_eq!(parse_abc(&text).unwrap().key, key, "{text}");
            }
        }
    }

    #[test]
    fn random_tunes_parse() {
        let mut rng = seeded(2);
        for i in 0..100 {
            let tune = random_abc_tune(&mut rng, i, 6);
            let s = parse_abc(&crate::abc::strip_metadata(&tune)).unwrap();
            assert_eq!(s.measures.len(), 6, "{tune}");
        }
    }
}
