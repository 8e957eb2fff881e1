//! Score to MIDI to audio rendering.
//!
//! Melody notes play as band-limited sawtooths on channel 0, chord symbols as sine voices on
//! channel 1. Rendering is deterministic: the same sequence always yields the same samples.

use std::f64::consts::PI;
use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::error::AudioError;
use crate::score::{ChordSymbol, EventKind, Score, TICKS_PER_MEASURE};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
/// 32 beats at this tempo last about nine seconds.
pub const DEFAULT_TEMPO_BPM: f64 = 213.0;
/// A quarter note is 48 ticks on the 1/192 grid, so score ticks are MIDI ticks.
pub const TICKS_PER_QUARTER: u16 = 48;

pub const MELODY_CHANNEL: u8 = 0;
pub const CHORD_CHANNEL: u8 = 1;
pub const MELODY_VELOCITY: u8 = 90;
pub const CHORD_VELOCITY: u8 = 60;

const ATTACK_S: f64 = 0.010;
const DECAY_TAU_S: f64 = 1.5;
const RELEASE_TAU_S: f64 = 0.010;
/// Samples keep sounding this long after a note-off.
pub const RELEASE_S: f64 = 0.050;
const MASTER_PEAK: f32 = 0.9;

/// Root-position voicing with the root in octave 3 (C3 = MIDI 48).
pub fn chord_to_pitches(chord: &ChordSymbol) -> Vec<u8> {
    let root = 48 + chord.root % 12;
    chord.quality.intervals().iter().map(|i| root + i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MidiEventKind {
    NoteOn,
    NoteOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiEvent {
    pub tick: u64,
    pub channel: u8,
    pub kind: MidiEventKind,
    pub key: u8,
    pub velocity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiSequence {
    pub ticks_per_quarter: u16,
    /// Microseconds per quarter note.
    pub tempo: u32,
    /// Sorted by tick; at equal ticks note-offs precede note-ons.
    pub events: Vec<MidiEvent>,
}

impl MidiSequence {
    pub fn seconds_per_tick(&self) -> f64 {
        self.tempo as f64 / 1e6 / self.ticks_per_quarter as f64
    }

    pub fn end_tick(&self) -> u64 {
        self.events.last().map_or(0, |e| e.tick)
    }

    /// Paired note spans `(start_tick, end_tick, channel, key, velocity)`.
    pub fn spans(&self) -> Vec<(u64, u64, u8, u8, u8)> {
        let mut open: Vec<(u8, u8, u64, u8)> = Vec::new();
        let mut spans = Vec::new();
        for e in &self.events {
            match e.kind {
                MidiEventKind::NoteOn => open.push((e.channel, e.key, e.tick, e.velocity)),
                MidiEventKind::NoteOff => {
                    if let Some(i) = open
                        .iter()
                        .position(|&(c, k, _, _)| c == e.channel && k == e.key)
                    {
                        let (c, k, start, v) = open.remove(i);
                        spans.push((start, e.tick, c, k, v));
                    }
                }
            }
        }
        spans.sort();
        spans
    }
}

pub fn tempo_micros(bpm: f64) -> u32 {
    (60e6 / bpm).round() as u32
}

fn push_span(
    events: &mut Vec<MidiEvent>,
    start: u64,
    end: u64,
    channel: u8,
    key: u8,
    velocity: u8,
) {
    events.push(MidiEvent {
        tick: start,
        channel,
        kind: MidiEventKind::NoteOn,
        key,
        velocity,
    });
    events.push(MidiEvent {
        tick: end,
        channel,
        kind: MidiEventKind::NoteOff,
        key,
        velocity: 0,
    });
}

/// Converts a normalized score to a MIDI sequence; tied notes of equal pitch become one span.
pub fn score_to_midi(score: &Score, tempo_bpm: f64) -> MidiSequence {
    let mut events = Vec::new();
    let mut held: Option<(u8, u64)> = None;
    let mut measure_start = 0u64;
    for m in &score.measures {
        let mut t = measure_start;
        for e in &m.events {
            let end = t + e.ticks() as u64;
            match e.kind {
                EventKind::Note(p) => {
                    let key = p.midi();
                    let start = match held.take() {
                        Some((k, s)) if k == key => s,
                        Some((k, s)) => {
                            push_span(&mut events, s, t, MELODY_CHANNEL, k, MELODY_VELOCITY);
                            t
                        }
                        None => t,
                    };
                    if e.tied_to_next {
                        held = Some((key, start));
                    } else {
                        push_span(
                            &mut events,
                            start,
                            end,
                            MELODY_CHANNEL,
                            key,
                            MELODY_VELOCITY,
                        );
                    }
                }
                EventKind::Rest => {
                    if let Some((k, s)) = held.take() {
                        push_span(&mut events, s, t, MELODY_CHANNEL, k, MELODY_VELOCITY);
                    }
                }
            }
            t = end;
        }
        let measure_end =
            measure_start + TICKS_PER_MEASURE.max(crate::score::measure_tick_sum(m)) as u64;
        for (i, c) in m.chords.iter().enumerate() {
            let start = measure_start + c.onset as u64;
            let end = m
                .chords
                .get(i + 1)
                .map_or(measure_end, |n| measure_start + n.onset as u64);
            for key in chord_to_pitches(c) {
                push_span(&mut events, start, end, CHORD_CHANNEL, key, CHORD_VELOCITY);
            }
        }
        measure_start = measure_end;
    }
    if let Some((k, s)) = held {
        push_span(
            &mut events,
            s,
            measure_start,
            MELODY_CHANNEL,
            k,
            MELODY_VELOCITY,
        );
    }
    events.sort_by_key(|e| (e.tick, e.kind == MidiEventKind::NoteOn, e.channel, e.key));
    MidiSequence {
        ticks_per_quarter: TICKS_PER_QUARTER,
        tempo: tempo_micros(tempo_bpm),
        events,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl AudioBuffer {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

pub fn midi_frequency(key: u8) -> f64 {
    440.0 * 2f64.powf((key as f64 - 69.0) / 12.0)
}

fn envelope(t: f64, hold: f64) -> f64 {
    let sustain = |t: f64| {
        let attack = (t / ATTACK_S).min(1.0);
        attack * (-(t - ATTACK_S).max(0.0) / DECAY_TAU_S).exp()
    };
    if t < hold {
        sustain(t)
    } else {
        sustain(hold) * (-(t - hold) / RELEASE_TAU_S).exp()
    }
}

/// Adds one voice into `out`; sawtooths sum every harmonic below Nyquist.
fn add_voice(
    out: &mut [f64],
    sample_rate: u32,
    start: usize,
    hold: usize,
    key: u8,
    gain: f64,
    saw: bool,
) {
    let sr = sample_rate as f64;
    let freq = midi_frequency(key);
    let harmonics = if saw {
        ((sr / 2.0) / freq).floor().max(1.0) as usize
    } else {
        1
    };
    let release = (RELEASE_S * sr).round() as usize;
    let end = (start + hold + release).min(out.len());
    let hold_s = hold as f64 / sr;
    let w = 2.0 * PI * freq / sr;
    let amp = if saw { gain * 2.0 / PI } else { gain };
    for (n, sample) in out[start..end].iter_mut().enumerate() {
        let phase = w * n as f64;
        let value = if saw {
            // sin(k x) by the Chebyshev recurrence, alternating signs for a rising ramp.
            let (s1, c1) = phase.sin_cos();
            let mut prev = 0.0;
            let mut cur = s1;
            let mut acc = 0.0;
            for k in 1..=harmonics {
                let term = cur / k as f64;
                acc += if k % 2 == 1 { term } else { -term };
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
            acc
        } else {
            phase.sin()
        };
        *sample += amp * envelope(n as f64 / sr, hold_s) * value;
    }
}

/// Renders a sequence to mono audio, normalized to a 0.9 peak.
///
/// The buffer runs to the last note-off plus the release tail.
pub fn render_wav(seq: &MidiSequence, sample_rate: u32) -> AudioBuffer {
    let spans = seq.spans();
    if spans.is_empty() {
        return AudioBuffer {
            sample_rate,
            samples: Vec::new(),
        };
    }
    let sr = sample_rate as f64;
    let spt = seq.seconds_per_tick();
    let to_sample = |tick: u64| (tick as f64 * spt * sr).round() as usize;
    let last = spans.iter().map(|s| s.1).max().unwrap_or(0);
    let len = to_sample(last) + (RELEASE_S * sr).round() as usize;
    let mut mix = vec![0.0f64; len];
    for &(start, end, channel, key, velocity) in &spans {
        let s = to_sample(start);
        let hold = to_sample(end).saturating_sub(s);
        let gain = velocity as f64 / 127.0;
        add_voice(
            &mut mix,
            sample_rate,
            s,
            hold,
            key,
            gain,
            channel == MELODY_CHANNEL,
        );
    }
    let peak = mix.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let scale = if peak > 0.0 {
        MASTER_PEAK as f64 / peak
    } else {
        0.0
    };
    AudioBuffer {
        sample_rate,
        samples: mix.iter().map(|s| (s * scale) as f32).collect(),
    }
}

fn write_vlq(out: &mut Vec<u8>, mut value: u64) {
    let mut bytes = vec![(value & 0x7f) as u8];
    value >>= 7;
    while value > 0 {
        bytes.push((value & 0x7f) as u8 | 0x80);
        value >>= 7;
    }
    out.extend(bytes.iter().rev());
}

/// Standard MIDI File, format 0, one track.
pub fn write_smf(seq: &MidiSequence) -> Vec<u8> {
    let mut track = Vec::new();
    track.extend([0x00, 0xff, 0x51, 0x03]);
    track.extend(&seq.tempo.to_be_bytes()[1..]);
    let mut last = 0;
    for e in &seq.events {
        write_vlq(&mut track, e.tick - last);
        last = e.tick;
        let status = match e.kind {
            MidiEventKind::NoteOn => 0x90,
            MidiEventKind::NoteOff => 0x80,
        } | (e.channel & 0x0f);
        track.extend([status, e.key & 0x7f, e.velocity & 0x7f]);
    }
    track.extend([0x00, 0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend(b"MThd");
    out.extend(6u32.to_be_bytes());
    out.extend(0u16.to_be_bytes());
    out.extend(1u16.to_be_bytes());
    out.extend(seq.ticks_per_quarter.to_be_bytes());
    out.extend(b"MTrk");
    out.extend((track.len() as u32).to_be_bytes());
    out.extend(track);
    out
}

fn to_pcm16(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16
}

/// RIFF/WAVE, PCM 16-bit little-endian mono, 44-byte header.
pub fn write_wav(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = audio.samples.len() as u32 * 2;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend(b"RIFF");
    out.extend((36 + data_len).to_le_bytes());
    out.extend(b"WAVE");
    out.extend(b"fmt ");
    out.extend(16u32.to_le_bytes());
    out.extend(1u16.to_le_bytes());
    out.extend(1u16.to_le_bytes());
    out.extend(audio.sample_rate.to_le_bytes());
    out.extend((audio.sample_rate * 2).to_le_bytes());
    out.extend(2u16.to_le_bytes());
    out.extend(16u16.to_le_bytes());
    out.extend(b"data");
    out.extend(data_len.to_le_bytes());
    for &s in &audio.samples {
        out.extend(to_pcm16(s).to_le_bytes());
    }
    out
}

/// Reads mono 16-bit PCM WAV data.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    let reader = hound::WavReader::new(Cursor::new(bytes))?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(AudioError::Unsupported(format!(
            "{} channels, {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / i16::MAX as f32))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AudioBuffer {
        sample_rate: spec.sample_rate,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{ChordQuality, Duration, Measure, NoteEvent, Pitch};

    fn chord(root: u8, quality: ChordQuality) -> ChordSymbol {
        ChordSymbol {
            root,
            quality,
            onset: 0,
        }
    }

    fn note(m: i32, t: u32) -> NoteEvent {
        NoteEvent::note(Pitch::new(m).unwrap(), Duration::new(t).unwrap())
    }

    fn rest(t: u32) -> NoteEvent {
        NoteEvent::rest(Duration::new(t).unwrap())
    }

    fn score_of(measures: Vec<Measure>) -> Score {
        Score {
            measures,
            ..Score::empty("t")
        }
    }

    #[test]
    fn chord_voicings() {
        assert_eq!(chord_to_pitches(&chord(0, ChordQuality::Maj)), [48, 52, 55]);
        assert_eq!(chord_to_pitches(&chord(9, ChordQuality::Min)), [57, 60, 64]);
        assert_eq!(
            chord_to_pitches(&chord(0, ChordQuality::Dom7)),
            [48, 52, 55, 58]
        );
        assert_eq!(
            chord_to_pitches(&chord(2, ChordQuality::Sus4)),
            [50, 55, 57]
        );
    }

    #[test]
    fn single_note_timing() {
        let s = score_of(vec![Measure::new(vec![note(60, 48), rest(144)], vec![])]);
        let seq = score_to_midi(&s, 120.0);
        assert_eq!(seq.ticks_per_quarter, 48);
        assert_eq!(seq.tempo, 500_000);
        assert_eq!(seq.spans(), [(0, 48, 0, 60, 90)]);
        assert!((48.0 * seq.seconds_per_tick() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tempo_rounding() {
        // 60e6 / 213 = 281690.14...
        assert_eq!(tempo_micros(213.0), 281_690);
    }

    #[test]
    fn chords_hold_to_next_chord_or_bar() {
        let s = score_of(vec![Measure::new(
            vec![note(72, 96), note(74, 96)],
            vec![
                chord(9, ChordQuality::Min),
                ChordSymbol {
                    root: 7,
                    quality: ChordQuality::Maj,
                    onset: 96,
                },
            ],
        )]);
        let spans: Vec<_> = score_to_midi(&s, 120.0)
            .spans()
            .into_iter()
            .filter(|s| s.2 == CHORD_CHANNEL)
            .collect();
        assert_eq!(
            spans,
            [
                (0, 96, 1, 57, 60),
                (0, 96, 1, 60, 60),
                (0, 96, 1, 64, 60),
                (96, 192, 1, 55, 60),
                (96, 192, 1, 59, 60),
                (96, 192, 1, 62, 60),
            ]
        );
    }

    #[test]
    fn ties_merge_into_one_span() {
        let mut a = Measure::new(vec![rest(96), note(60, 96)], vec![]);
        a.events[1].tied_to_next = true;
        let b = Measure::new(vec![note(60, 48), note(62, 144)], vec![]);
        let spans = score_to_midi(&score_of(vec![a, b]), 120.0).spans();
        assert_eq!(spans, [(96, 240, 0, 60, 90), (240, 384, 0, 62, 90)]);
    }

    #[test]
    fn empty_sequence_renders_nothing() {
        let seq = score_to_midi(&Score::empty(""), 120.0);
        assert!(render_wav(&seq, 16_000).samples.is_empty());
        assert_eq!(write_wav(&render_wav(&seq, 16_000)).len(), 44);
    }

    #[test]
    fn one_measure_at_120_is_two_seconds() {
        let s = score_of(vec![Measure::new(
            vec![note(60, 192)],
            vec![chord(0, ChordQuality::Maj)],
        )]);
        let audio = render_wav(&score_to_midi(&s, 120.0), 16_000);
        assert_eq!(audio.samples.len(), 32_000 + 800);
        assert!(audio.peak() <= 0.9 + 1e-6);
        assert!(audio.peak() > 0.89);
    }

    #[test]
    fn wav_header_fields() {
        let audio = AudioBuffer {
            sample_rate: 16_000,
            samples: vec![0.25; 16_000],
        };
        let bytes = write_wav(&audio);
        assert_eq!(bytes.len(), 44 + 32_000);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(
            u32::from_le_bytes(bytes[24..28].try_into().unwrap()),
            16_000
        );
        assert_eq!(
            u32::from_le_bytes(bytes[40..44].try_into().unwrap()),
            32_000
        );
    }

    #[test]
    fn smf_layout() {
        let s = score_to_midi(
            &score_of(vec![Measure::new(vec![note(60, 192)], vec![])]),
            120.0,
        );
        let bytes = write_smf(&s);
        assert_eq!(&bytes[..14], b"MThd\0\0\0\x06\0\0\0\x01\0\x30");
        // delta 192 encodes as two VLQ bytes 0x81 0x40.
        let tail = &bytes[bytes.len() - 13..];
        assert_eq!(
            tail,
            [0x00, 0x90, 60, 90, 0x81, 0x40, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00]
        );
    }
}
