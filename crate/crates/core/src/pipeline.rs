//! End-to-end dataset builder: ABC sources in, paired WAV and token manifests out.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! manifest.jsonl   one ManifestRecord per line, index order
//! vocab.json       token table
//! abc/<id>.abc     generated score
//! tokens/<id>.txt  token text (or <id>.tok, little-endian u16)
//! wav/<id>.wav     16-bit mono render
//! midi/<id>.mid    optional SMF
//! ```

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abc::{parse_abc, strip_metadata, write_abc};
use crate::augment::{
    build_section_pool_with, generate_score, mutate, GenerationParams, MutationLog, MutationParams,
    RankFeature, SamplingStrategy, SectionPool, DEFAULT_SIGMA_FRACTION,
};
use crate::error::PipelineError;
use crate::normalize::{normalize, RepairReport};
use crate::par::{self, Execution};
use crate::rng;
use crate::score::Score;
use crate::synth::{render_wav, score_to_midi, write_smf, write_wav};
use crate::tokenizer::{
    decode, encode, parse_token_text, render_token_text, tokens_to_bytes, vocabulary,
};

/// Largest allowed gap between a manifest's `duration_s` and the WAV on disk.
pub const DURATION_TOLERANCE_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutateStage {
    #[default]
    None,
    /// Mutate each normalized source before its measures enter the pool.
    BeforePool,
    /// Mutate each generated score, seeded by its index.
    AfterGenerate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    Uniform,
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenFormat {
    #[default]
    Text,
    Binary,
}

impl TokenFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TokenFormat::Text => "txt",
            TokenFormat::Binary => "tok",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub count: u64,
    pub sections_per_score: usize,
    pub strategy: StrategyName,
    pub sigma_fraction: f64,
    pub rank_feature: RankFeature,
    pub seed: u64,
    pub tempo_bpm: f64,
    pub sample_rate: u32,
    pub mutate: MutateStage,
    pub mutation: MutationParams,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub token_format: TokenFormat,
    pub write_midi: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_dir: PathBuf::from("corpus"),
            output_dir: PathBuf::from("dataset"),
            count: 1000,
            sections_per_score: 8,
            strategy: StrategyName::Gaussian,
            sigma_fraction: DEFAULT_SIGMA_FRACTION,
            rank_feature: RankFeature::MeanPitch,
            seed: 0,
            tempo_bpm: crate::synth::DEFAULT_TEMPO_BPM,
            sample_rate: crate::synth::DEFAULT_SAMPLE_RATE,
            mutate: MutateStage::None,
            mutation: MutationParams::default(),
            jobs: None,
            token_format: TokenFormat::Text,
            write_midi: false,
        }
    }
}

impl PipelineConfig {
    pub fn sampling_strategy(&self) -> SamplingStrategy {
        match self.strategy {
            StrategyName::Uniform => SamplingStrategy::Uniform,
            StrategyName::Gaussian => SamplingStrategy::Gaussian {
                sigma_fraction: self.sigma_fraction,
            },
        }
    }

    pub fn generation_params(&self) -> GenerationParams {
        GenerationParams {
            sections_per_score: self.sections_per_score,
            strategy: self.sampling_strategy(),
            seed: self.seed,
            mutation: (self.mutate == MutateStage::AfterGenerate).then_some(self.mutation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub wav_path: String,
    pub token_text: String,
    pub abc_path: String,
    pub duration_s: f64,
    pub seed: u64,
}

/// One source file that could not be used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSource {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub sources_used: usize,
    pub skipped: Vec<SkippedSource>,
    pub repair: RepairReport,
    pub pool_size: usize,
    pub records: u64,
    pub manifest_path: PathBuf,
}

impl PipelineSummary {
    pub fn is_partial(&self) -> bool {
        !self.skipped.is_empty()
    }
}

/// Sorted `*.abc` paths directly inside `dir`.
pub fn list_abc_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "abc") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Clean, parse and normalize one ABC text; `fallback_id` names scores without `X:`.
pub fn load_source(text: &str, fallback_id: &str) -> Result<(Score, RepairReport), String> {
    let mut score = parse_abc(&strip_metadata(text)).map_err(|e| e.to_string())?;
    if score.source_id.is_empty() {
        score.source_id = fallback_id.to_string();
    }
    normalize(&score).map_err(|e| e.to_string())
}

/// Normalized corpus with per-file failures collected rather than raised.
pub struct Corpus {
    pub scores: Vec<Score>,
    pub skipped: Vec<SkippedSource>,
    pub repair: RepairReport,
}

pub fn load_corpus(dir: &Path) -> Result<Corpus, PipelineError> {
    let mut corpus = Corpus {
        scores: Vec::new(),
        skipped: Vec::new(),
        repair: RepairReport::default(),
    };
    for path in list_abc_files(dir)? {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("source")
            .to_string();
        let loaded = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| load_source(&text, &stem));
        match loaded {
            Ok((score, report)) if !score.measures.is_empty() => {
                corpus.repair.merge(&report);
                corpus.scores.push(score);
            }
            Ok(_) => skip(
                &mut corpus.skipped,
                path,
                "no complete measures after repair".into(),
            ),
            Err(reason) => skip(&mut corpus.skipped, path, reason),
        }
    }
    Ok(corpus)
}

fn skip(out: &mut Vec<SkippedSource>, path: PathBuf, reason: String) {
    log::warn!("skipping {}: {reason}", path.display());
    out.push(SkippedSource { path, reason });
}

/// Mutates source `i` with a seed derived from `(seed, i)`.
pub fn mutate_sources(
    scores: &[Score],
    params: &MutationParams,
    seed: u64,
) -> Vec<(Score, MutationLog)> {
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let seed = rng::derive_seed(seed ^ rng::SOURCE_MUTATION_SALT, i as u64);
            mutate(s, &params.with_seed(seed))
        })
        .collect()
}

/// Seed recorded in the manifest for record `index`.
pub fn record_seed(seed: u64, index: u64) -> u64 {
    rng::derive_seed(seed, index)
}

pub fn record_id(index: u64) -> String {
    format!("gen-{index:06}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Checks the manifest invariants for one record against the files under `root`.
pub fn verify_record(root: &Path, record: &ManifestRecord) -> Result<(), String> {
    let tokens = parse_token_text(&record.token_text).map_err(|e| e.to_string())?;
    let (score, report) = decode(&tokens);
    if !report.is_clean() {
        return Err(format!("token text needs recovery: {report:?}"));
    }
    let again = encode(&score).map_err(|e| e.to_string())?;
    if again != tokens {
        return Err("decoded tokens do not re-encode identically".into());
    }
    if !root.join(&record.abc_path).is_file() {
        return Err(format!("missing {}", record.abc_path));
    }
    let wav =
        fs::read(root.join(&record.wav_path)).map_err(|e| format!("{}: {e}", record.wav_path))?;
    let reader = hound::WavReader::new(Cursor::new(wav)).map_err(|e| e.to_string())?;
    let seconds = reader.duration() as f64 / reader.spec().sample_rate as f64;
    if (seconds - record.duration_s).abs() > DURATION_TOLERANCE_S {
        return Err(format!(
            "WAV lasts {seconds:.3} s but manifest says {:.3} s",
            record.duration_s
        ));
    }
    Ok(())
}

fn produce_record(
    pool: &SectionPool,
    config: &PipelineConfig,
    params: &GenerationParams,
    index: u64,
) -> Result<ManifestRecord, PipelineError> {
    let out = &config.output_dir;
    let score = generate_score(pool, params, index)?;
    let id = record_id(index);
    let tokens = encode(&score)?;
    let token_text = render_token_text(&tokens);

    let abc_path = format!("abc/{id}.abc");
    write_file(&out.join(&abc_path), (write_abc(&score)? + "\n").as_bytes())?;
    let token_path = out.join(format!("tokens/{id}.{}", config.token_format.extension()));
    match config.token_format {
        TokenFormat::Text => write_file(&token_path, format!("{token_text}\n").as_bytes())?,
        TokenFormat::Binary => write_file(&token_path, &tokens_to_bytes(&tokens))?,
    }
    let midi = score_to_midi(&score, config.tempo_bpm);
    if config.write_midi {
        write_file(&out.join(format!("midi/{id}.mid")), &write_smf(&midi))?;
    }
    let audio = render_wav(&midi, config.sample_rate);
    let wav_path = format!("wav/{id}.wav");
    write_file(&out.join(&wav_path), &write_wav(&audio))?;

    let record = ManifestRecord {
        id,
        wav_path,
        token_text,
        abc_path,
        duration_s: audio.duration_s(),
        seed: record_seed(config.seed, index),
    };
    verify_record(out, &record)
        .map_err(|message| PipelineError::Verification { index, message })?;
    Ok(record)
}

/// Runs the whole dataset build described by `config`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    config.mutation.validate()?;
    let corpus = load_corpus(&config.input_dir)?;
    if corpus.scores.is_empty() {
        return Err(PipelineError::EmptyCorpus(config.input_dir.clone()));
    }
    let sources: Vec<Score> = match config.mutate {
        MutateStage::BeforePool => mutate_sources(&corpus.scores, &config.mutation, config.seed)
            .into_iter()
            .map(|(s, _)| s)
            .collect(),
        _ => corpus.scores.clone(),
    };
    let pool = build_section_pool_with(&sources, config.rank_feature)?;
    log::info!(
        "{} sources ({} skipped) gave {} distinct sections",
        corpus.scores.len(),
        corpus.skipped.len(),
        pool.len()
    );

    let out = &config.output_dir;
    for sub in ["abc", "tokens", "wav"] {
        create_dir(&out.join(sub))?;
    }
    if config.write_midi {
        create_dir(&out.join("midi"))?;
    }
    write_file(&out.join("vocab.json"), vocabulary().to_json().as_bytes())?;

    let params = config.generation_params();
    let jobs = config
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = par::with_jobs(jobs, || {
        par::map_range(Execution::default(), 0..config.count, |k| {
            produce_record(&pool, config, &params, k)
        })
    })
    .map_err(PipelineError::Workers)?;

    let mut manifest = String::new();
    for record in results {
        manifest.push_str(&serde_json::to_string(&record?)?);
        manifest.push('\n');
    }
    let manifest_path = out.join("manifest.jsonl");
    write_file(&manifest_path, manifest.as_bytes())?;

    Ok(PipelineSummary {
        sources_used: corpus.scores.len(),
        skipped: corpus.skipped,
        repair: corpus.repair,
        pool_size: pool.len(),
        records: config.count,
        manifest_path,
    })
}

/// Parses a JSON Lines manifest.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(PipelineError::from))
        .collect()
}
