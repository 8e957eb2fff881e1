//! Seeded augmentation: Gaussian pitch mutation, rest absorption, and recombination of
//! measures drawn from a pooled section bank.

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::AugmentError;
use crate::rng::{self, Rng};
use crate::score::{
    measure_tick_sum, Duration, EventKind, Measure, Pitch, Score, MAX_PITCH, MIN_PITCH,
    TICKS_PER_MEASURE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationParams {
    pub pitch_prob: f64,
    pub pitch_sigma: f64,
    pub extend_prob: f64,
    pub snap_to_scale: bool,
    pub seed: u64,
}

impl Default for MutationParams {
    fn default() -> Self {
        MutationParams {
            pitch_prob: 0.1,
            pitch_sigma: 2.0,
            extend_prob: 0.05,
            snap_to_scale: true,
            seed: 0,
        }
    }
}

impl MutationParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, p) in [
            ("pitch_prob", self.pitch_prob),
            ("extend_prob", self.extend_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AugmentError::InvalidParams(format!(
                    "{name} = {p} is not in [0, 1]"
                )));
            }
        }
        if !(self.pitch_sigma >= 0.0 && self.pitch_sigma.is_finite()) {
            return Err(AugmentError::InvalidParams(format!(
                "pitch_sigma = {} must be finite and non-negative",
                self.pitch_sigma
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        MutationParams { seed, ..self }
    }
}

/// One changed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationEntry {
    pub measure: usize,
    pub event: usize,
    pub old_pitch: Option<u8>,
    pub new_pitch: Option<u8>,
    pub old_ticks: u32,
    pub new_ticks: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationLog {
    pub entries: Vec<MutationEntry>,
}

impl MutationLog {
    pub fn extend(&mut self, other: MutationLog) {
        self.entries.extend(other.entries);
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }
}

/// Moves a pitch onto the C major scale; accidentals sit a semitone from two scale tones
/// and resolve downward.
pub fn snap_to_c_major(midi: i32) -> i32 {
    match midi.rem_euclid(12) {
        1 | 3 | 6 | 8 | 10 => midi - 1,
        _ => midi,
    }
}

/// Result of shifting `midi` by `shift` semitones under the mutation rules.
pub fn shifted_pitch(midi: u8, shift: i32, snap: bool) -> u8 {
    let mut p = midi as i32 + shift;
    if snap {
        p = snap_to_c_major(p);
    }
    p.clamp(MIN_PITCH as i32, MAX_PITCH as i32) as u8
}

/// Shifts each note with probability `pitch_prob` by `round(N(0, pitch_sigma))` semitones.
///
/// A note continuing a tie follows whatever happened to the note it is tied from.
pub fn mutate_pitches(score: &Score, params: &MutationParams) -> (Score, MutationLog) {
    let mut rng = rng::stream_rng(params.seed, 0);
    let mut log = MutationLog::default();
    let mut out = score.clone();
    let mut carried: Option<(Pitch, Pitch)> = None;
    for (mi, m) in out.measures.iter_mut().enumerate() {
        for (ei, e) in m.events.iter_mut().enumerate() {
            let EventKind::Note(old) = e.kind else {
                carried = None;
                continue;
            };
            let new = match carried {
                Some((from, to)) if from == old => to,
                _ => {
                    if rng.random::<f64>() < params.pitch_prob {
                        let z: f64 = rng.sample(StandardNormal);
                        let shift = (params.pitch_sigma * z).round() as i32;
                        Pitch::new(shifted_pitch(old.midi(), shift, params.snap_to_scale) as i32)
                            .expect("clamped pitch")
                    } else {
                        old
                    }
                }
            };
            carried = e.tied_to_next.then_some((old, new));
            if new != old {
                e.kind = EventKind::Note(new);
                log.entries.push(MutationEntry {
                    measure: mi,
                    event: ei,
                    old_pitch: Some(old.midi()),
                    new_pitch: Some(new.midi()),
                    old_ticks: e.ticks(),
                    new_ticks: e.ticks(),
                });
            }
        }
    }
    (out, log)
}

/// With probability `extend_prob` per note, lets a note absorb the rest right after it.
///
/// Rests that carry a chord onset are kept so the chord stays anchored.
pub fn extend_durations(score: &Score, params: &MutationParams) -> (Score, MutationLog) {
    let mut rng = rng::stream_rng(params.seed, 1);
    let mut log = MutationLog::default();
    let mut out = score.clone();
    for (mi, m) in out.measures.iter_mut().enumerate() {
        let mut i = 0;
        let mut onset = 0;
        while i < m.events.len() {
            let e = m.events[i];
            if !e.is_rest() {
                let selected = rng.random::<f64>() < params.extend_prob;
                let next_rest = m
                    .events
                    .get(i + 1)
                    .filter(|n| n.is_rest())
                    .map(|n| n.ticks());
                if let (true, Some(rest)) = (selected, next_rest) {
                    let rest_onset = onset + e.ticks();
                    if !m.chords.iter().any(|c| c.onset == rest_onset) {
                        let new = e.ticks() + rest;
                        m.events[i].duration = Duration::new(new).expect("positive");
                        m.events.remove(i + 1);
                        log.entries.push(MutationEntry {
                            measure: mi,
                            event: i,
                            old_pitch: e.pitch().map(Pitch::midi),
                            new_pitch: e.pitch().map(Pitch::midi),
                            old_ticks: e.ticks(),
                            new_ticks: new,
                        });
                    }
                }
            }
            onset += m.events[i].ticks();
            i += 1;
        }
    }
    (out, log)
}

/// Pitch mutation followed by duration extension, with a merged log.
pub fn mutate(score: &Score, params: &MutationParams) -> (Score, MutationLog) {
    let (pitched, mut log) = mutate_pitches(score, params);
    let (extended, ext_log) = extend_durations(&pitched, params);
    log.extend(ext_log);
    (extended, log)
}

/// Scalar used to order sections for Gaussian sampling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankFeature {
    #[default]
    MeanPitch,
    NoteCount,
}

impl RankFeature {
    /// All-rest sections rank lowest under `MeanPitch`.
    pub fn value(self, m: &Measure) -> f64 {
        match self {
            RankFeature::MeanPitch => {
                let (sum, n) = m
                    .notes()
                    .fold((0u64, 0u64), |(s, n), p| (s + p.midi() as u64, n + 1));
                if n == 0 {
                    -1.0
                } else {
                    sum as f64 / n as f64
                }
            }
            RankFeature::NoteCount => m.notes().count() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplingStrategy {
    /// Every section equally likely.
    Uniform,
    /// Rank index drawn as `round(N((P-1)/2, P * sigma_fraction))`, clamped to the pool.
    Gaussian { sigma_fraction: f64 },
}

/// Default Gaussian width as a fraction of the pool size.
pub const DEFAULT_SIGMA_FRACTION: f64 = 1.0 / 7.0;

impl SamplingStrategy {
    pub fn gaussian() -> Self {
        SamplingStrategy::Gaussian {
            sigma_fraction: DEFAULT_SIGMA_FRACTION,
        }
    }
}

/// Deduplicated bank of normalized measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionPool {
    sections: Vec<Measure>,
    /// Section indices ordered by the rank feature, ties by first occurrence.
    ranked: Vec<usize>,
}

impl SectionPool {
    pub fn from_sections(
        sections: Vec<Measure>,
        feature: RankFeature,
    ) -> Result<Self, AugmentError> {
        if sections.is_empty() {
            return Err(AugmentError::EmptyPool);
        }
        let mut seen = HashSet::new();
        let sections: Vec<Measure> = sections
            .into_iter()
            .filter(|m| seen.insert(m.clone()))
            .collect();
        let values: Vec<f64> = sections.iter().map(|m| feature.value(m)).collect();
        let mut ranked: Vec<usize> = (0..sections.len()).collect();
        ranked.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        Ok(SectionPool { sections, ranked })
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn sections(&self) -> &[Measure] {
        &self.sections
    }

    /// Section index at each rank position.
    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    /// Probability of drawing each section (by section index) under `strategy`; sums to 1.
    pub fn weights(&self, strategy: SamplingStrategy) -> Vec<f64> {
        let p = self.len();
        match strategy {
            SamplingStrategy::Uniform => vec![1.0 / p as f64; p],
            SamplingStrategy::Gaussian { sigma_fraction } => {
                let (mu, sigma) = gaussian_shape(p, sigma_fraction);
                let cdf = |x: f64| {
                    if sigma == 0.0 {
                        if x >= mu {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        normal_cdf((x - mu) / sigma)
                    }
                };
                let mut w = vec![0.0; p];
                for (r, &section) in self.ranked.iter().enumerate() {
                    let lo = if r == 0 { 0.0 } else { cdf(r as f64 - 0.5) };
                    let hi = if r + 1 == p { 1.0 } else { cdf(r as f64 + 0.5) };
                    w[section] = hi - lo;
                }
                w
            }
        }
    }

    /// Draws one section index.
    pub fn sample_index(&self, strategy: SamplingStrategy, rng: &mut Rng) -> usize {
        let p = self.len();
        match strategy {
            SamplingStrategy::Uniform => rng.random_range(0..p),
            SamplingStrategy::Gaussian { sigma_fraction } => {
                let (mu, sigma) = gaussian_shape(p, sigma_fraction);
                let z: f64 = rng.sample(StandardNormal);
                let rank = (mu + sigma * z).round().clamp(0.0, (p - 1) as f64) as usize;
                self.ranked[rank]
            }
        }
    }
}

fn gaussian_shape(pool: usize, sigma_fraction: f64) -> (f64, f64) {
    ((pool as f64 - 1.0) / 2.0, pool as f64 * sigma_fraction)
}

/// Standard normal CDF via the complementary error function (|error| < 1.2e-7).
fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.5 * x.abs());
    let poly = -x * x - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let erfc = t * poly.exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

/// Pools every measure of every score, deduplicated, ranked by mean pitch.
pub fn build_section_pool(scores: &[Score]) -> Result<SectionPool, AugmentError> {
    build_section_pool_with(scores, RankFeature::MeanPitch)
}

pub fn build_section_pool_with(
    scores: &[Score],
    feature: RankFeature,
) -> Result<SectionPool, AugmentError> {
    let sections = scores
        .iter()
        .flat_map(|s| s.measures.iter().cloned())
        .filter(|m| measure_tick_sum(m) == TICKS_PER_MEASURE)
        .collect();
    SectionPool::from_sections(sections, feature)
}

/// Builds a score of `n` sections drawn with replacement from `rng`.
///
/// A tie left hanging at the end of a drawn section is cleared.
pub fn sample_sections_with(
    pool: &SectionPool,
    n: usize,
    strategy: SamplingStrategy,
    rng: &mut Rng,
) -> Result<Score, AugmentError> {
    if n == 0 {
        return Err(AugmentError::ZeroSections);
    }
    if pool.is_empty() {
        return Err(AugmentError::EmptyPool);
    }
    let mut score = Score::empty("");
    for _ in 0..n {
        let mut m = pool.sections[pool.sample_index(strategy, rng)].clone();
        if let Some(last) = m.events.last_mut() {
            last.tied_to_next = false;
        }
        score.measures.push(m);
    }
    Ok(score)
}

pub fn sample_sections(
    pool: &SectionPool,
    n: usize,
    strategy: SamplingStrategy,
    seed: u64,
) -> Result<Score, AugmentError> {
    sample_sections_with(pool, n, strategy, &mut rng::seeded(seed))
}

/// Settings shared by every score of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationParams {
    pub sections_per_score: usize,
    pub strategy: SamplingStrategy,
    pub seed: u64,
    /// Mutation applied to each generated score, seeded per index.
    pub mutation: Option<MutationParams>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            sections_per_score: 8,
            strategy: SamplingStrategy::gaussian(),
            seed: 0,
            mutation: None,
        }
    }
}

/// Score `index` of a dataset, independent of every other index.
pub fn generate_score(
    pool: &SectionPool,
    params: &GenerationParams,
    index: u64,
) -> Result<Score, AugmentError> {
    generate_score_logged(pool, params, index).map(|(s, _)| s)
}

/// Like [`generate_score`], also returning the mutations applied (empty without mutation).
pub fn generate_score_logged(
    pool: &SectionPool,
    params: &GenerationParams,
    index: u64,
) -> Result<(Score, MutationLog), AugmentError> {
    let mut rng = rng::stream_rng(params.seed, index);
    let mut score =
        sample_sections_with(pool, params.sections_per_score, params.strategy, &mut rng)?;
    let mut log = MutationLog::default();
    if let Some(m) = params.mutation {
        let seed = rng::derive_seed(params.seed ^ rng::GENERATED_MUTATION_SALT, index);
        (score, log) = mutate(&score, &m.with_seed(seed));
    }
    score.source_id = format!("gen-{index:06}");
    Ok((score, log))
}

/// Lazily yields `count` generated scores in index order.
pub fn generate_dataset<'a>(
    pool: &'a SectionPool,
    count: u64,
    params: GenerationParams,
) -> impl Iterator<Item = Result<Score, AugmentError>> + 'a {
    (0..count).map(move |k| generate_score(pool, &params, k))
}
