//! Bringing parsed scores onto the common training format: C major, 4/4, every measure
//! exactly 192 ticks and every duration a multiple of 4 ticks.

use serde::{Deserialize, Serialize};

use crate::error::NormalizeError;
use crate::score::{
    measure_tick_sum, ChordSymbol, Duration, EventKind, KeySignature, Meter, Mode, NoteEvent,
    Pitch, Score, MAX_PITCH, MIN_PITCH, TICKS_PER_MEASURE, TICK_GRID,
};

/// Counts of what normalization did to a score's measures and durations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub padded: usize,
    pub discarded: usize,
    pub untouched: usize,
    pub snapped: usize,
}

impl RepairReport {
    pub fn merge(&mut self, other: &RepairReport) {
        self.padded += other.padded;
        self.discarded += other.discarded;
        self.untouched += other.untouched;
        self.snapped += other.snapped;
    }
}

/// Rejects non-4/4 sources and keeps one chord per onset (the last written), ordered by onset.
pub fn strip_invalid(score: &Score) -> Result<Score, NormalizeError> {
    if score.meter != Meter::COMMON {
        log::warn!("{}: rejecting meter {}", score.source_id, score.meter);
        return Err(NormalizeError::UnsupportedMeter(score.meter.to_string()));
    }
    let mut out = score.clone();
    for m in &mut out.measures {
        m.chords = dedup_chords(std::mem::take(&mut m.chords));
    }
    Ok(out)
}

fn dedup_chords(mut chords: Vec<ChordSymbol>) -> Vec<ChordSymbol> {
    chords.sort_by_key(|c| c.onset);
    let mut out: Vec<ChordSymbol> = Vec::with_capacity(chords.len());
    for c in chords {
        match out.last_mut() {
            Some(last) if last.onset == c.onset => *last = c,
            _ => out.push(c),
        }
    }
    out
}

/// Nearest multiple of the tick grid, halves rounding up, never below one grid step.
pub fn snap_ticks(ticks: u32) -> u32 {
    (((ticks + TICK_GRID / 2) / TICK_GRID) * TICK_GRID).max(TICK_GRID)
}

/// Snaps every duration onto the 4-tick grid and re-anchors chords to the event they preceded.
///
/// Returns the re-gridded score and the number of durations that had to move.
pub fn regrid_durations(score: &Score) -> (Score, usize) {
    let mut snapped = 0;
    let mut out = score.clone();
    for m in &mut out.measures {
        let old_onsets = m.onsets();
        for e in &mut m.events {
            let t = snap_ticks(e.ticks());
            if t != e.ticks() {
                log::debug!("{}: snapped {} ticks to {t}", score.source_id, e.ticks());
                snapped += 1;
                e.duration = Duration::new(t).expect("snapped ticks are positive");
            }
        }
        let new_onsets = m.onsets();
        let new_sum = measure_tick_sum(m);
        for c in &mut m.chords {
            c.onset = match old_onsets.iter().position(|&o| o >= c.onset) {
                Some(i) => new_onsets[i],
                None => new_sum,
            };
        }
        m.chords = dedup_chords(std::mem::take(&mut m.chords));
    }
    (out, snapped)
}

/// Signed semitone shift taking the key's tonic to C (major) or A (minor).
///
/// Of the two candidates the one with the smaller magnitude wins; a tritone goes down.
pub fn transposition_offset(key: KeySignature) -> i32 {
    let target = match key.mode {
        Mode::Major => 0,
        Mode::Minor => 9,
    };
    let up = (target - key.tonic as i32).rem_euclid(12);
    if up < 12 - up {
        up
    } else {
        up - 12
    }
}

fn clamp_by_octaves(midi: i32) -> i32 {
    let mut m = midi;
    while m < MIN_PITCH as i32 {
        m += 12;
    }
    while m > MAX_PITCH as i32 {
        m -= 12;
    }
    m
}

/// Transposes every pitch and chord root so the score reads in C major.
///
/// Pitches leaving the melody range are folded back by whole octaves.
pub fn transpose_to_c(score: &Score) -> Score {
    let shift = transposition_offset(score.key);
    let mut out = score.clone();
    for (mi, m) in out.measures.iter_mut().enumerate() {
        for (ei, e) in m.events.iter_mut().enumerate() {
            if let EventKind::Note(p) = e.kind {
                let moved = p.midi() as i32 + shift;
                let clamped = clamp_by_octaves(moved);
                if clamped != moved {
                    log::info!(
                        "{}: measure {mi} event {ei}: pitch {moved} folded to {clamped}",
                        score.source_id
                    );
                }
                e.kind = EventKind::Note(Pitch::new(clamped).expect("clamped into melody range"));
            }
        }
        for c in &mut m.chords {
            c.root = (c.root as i32 + shift).rem_euclid(12) as u8;
        }
    }
    out.key = KeySignature::C_MAJOR;
    out
}

/// Pads short measures with a trailing rest and drops overfull ones.
pub fn repair_measures(score: &Score) -> (Score, RepairReport) {
    let mut report = RepairReport::default();
    let mut measures = Vec::with_capacity(score.measures.len());
    for m in &score.measures {
        let sum = measure_tick_sum(m);
        let mut m = m.clone();
        if sum > TICKS_PER_MEASURE {
            log::debug!("{}: discarding {sum}-tick measure", score.source_id);
            report.discarded += 1;
            continue;
        }
        if sum < TICKS_PER_MEASURE {
            m.events.push(NoteEvent::rest(
                Duration::new(TICKS_PER_MEASURE - sum).expect("positive padding"),
            ));
            report.padded += 1;
        } else {
            report.untouched += 1;
        }
        let onsets = m.onsets();
        m.chords.retain(|c| onsets.contains(&c.onset));
        measures.push(m);
    }
    (
        Score {
            measures,
            ..score.clone()
        },
        report,
    )
}

/// Full normalization: strip invalid content, re-grid, transpose, repair.
pub fn normalize(score: &Score) -> Result<(Score, RepairReport), NormalizeError> {
    let stripped = strip_invalid(score)?;
    let (gridded, snapped) = regrid_durations(&stripped);
    let transposed = transpose_to_c(&gridded);
    let (repaired, mut report) = repair_measures(&transposed);
    report.snapped = snapped;
    Ok((repaired, report))
}
