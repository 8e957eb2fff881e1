//! Layered settings: TOML file, then command-line flags, then `ORPHEUS_SEED`.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};

use orpheus::augment::{MutationParams, RankFeature};
use orpheus::pipeline::{MutateStage, PipelineConfig, StrategyName, TokenFormat};

pub const SEED_ENV: &str = "ORPHEUS_SEED";

/// `ORPHEUS_SEED` beats the flag, which beats `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer")),
        Err(_) => Ok(flag.unwrap_or(fallback)),
    }
}

#[derive(Args, Default)]
pub struct MutationArgs {
    /// Per-note probability of a Gaussian pitch shift.
    #[arg(long)]
    pub pitch_prob: Option<f64>,
    /// Standard deviation of the pitch shift in semitones.
    #[arg(long)]
    pub pitch_sigma: Option<f64>,
    /// Per-note probability of absorbing a following rest.
    #[arg(long)]
    pub extend_prob: Option<f64>,
    /// Keep chromatic results instead of snapping to C major.
    #[arg(long)]
    pub no_snap: bool,
}

impl MutationArgs {
    pub fn apply(&self, base: MutationParams) -> MutationParams {
        MutationParams {
            pitch_prob: self.pitch_prob.unwrap_or(base.pitch_prob),
            pitch_sigma: self.pitch_sigma.unwrap_or(base.pitch_sigma),
            extend_prob: self.extend_prob.unwrap_or(base.extend_prob),
            snap_to_scale: base.snap_to_scale && !self.no_snap,
            seed: base.seed,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
pub enum StrategyArg {
    Uniform,
    Gaussian,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum RankArg {
    MeanPitch,
    NoteCount,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum StageArg {
    None,
    BeforePool,
    AfterGenerate,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum TokenFormatArg {
    Text,
    Binary,
}

/// Settings shared by `gen-dataset` and `pipeline`.
#[derive(Args)]
pub struct GenerationArgs {
    /// TOML file with defaults; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of source `.abc` files.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Number of scores to generate.
    #[arg(long)]
    pub count: Option<u64>,
    /// Measures per generated score.
    #[arg(long)]
    pub sections: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Gaussian standard deviation as a fraction of the pool size.
    #[arg(long)]
    pub sigma_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub rank_feature: Option<RankArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// When to apply mutation.
    #[arg(long, value_enum)]
    pub mutate: Option<StageArg>,
    #[command(flatten)]
    pub mutation: MutationArgs,
}

impl GenerationArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.input {
            c.input_dir = v.clone();
        }
        if let Some(v) = &self.output {
            c.output_dir = v.clone();
        }
        c.count = self.count.unwrap_or(c.count);
        c.sections_per_score = self.sections.unwrap_or(c.sections_per_score);
        c.sigma_fraction = self.sigma_fraction.unwrap_or(c.sigma_fraction);
        if let Some(s) = self.strategy {
            c.strategy = match s {
                StrategyArg::Uniform => StrategyName::Uniform,
                StrategyArg::Gaussian => StrategyName::Gaussian,
            };
        }
        if let Some(r) = self.rank_feature {
            c.rank_feature = match r {
                RankArg::MeanPitch => RankFeature::MeanPitch,
                RankArg::NoteCount => RankFeature::NoteCount,
            };
        }
        if let Some(m) = self.mutate {
            c.mutate = match m {
                StageArg::None => MutateStage::None,
                StageArg::BeforePool => MutateStage::BeforePool,
                StageArg::AfterGenerate => MutateStage::AfterGenerate,
            };
        }
        c.mutation = self.mutation.apply(c.mutation);
        c.seed = resolve_seed(self.seed, c.seed)?;
        Ok(c)
    }
}

#[derive(Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub tempo: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long, value_enum)]
    pub token_format: Option<TokenFormatArg>,
    /// Also write a MIDI file per record.
    #[arg(long)]
    pub midi: bool,
}

impl PipelineArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = self.generation.resolve()?;
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        c.tempo_bpm = self.tempo.unwrap_or(c.tempo_bpm);
        c.sample_rate = self.sample_rate.unwrap_or(c.sample_rate);
        if let Some(f) = self.token_format {
            c.token_format = match f {
                TokenFormatArg::Text => TokenFormat::Text,
                TokenFormatArg::Binary => TokenFormat::Binary,
            };
        }
        c.write_midi |= self.midi;
        if !(c.tempo_bpm.is_finite() && c.tempo_bpm > 0.0) || c.sample_rate == 0 {
            anyhow::bail!("tempo and sample rate must be positive");
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_toml_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(
            &path,
            "count = 12\nstrategy = \"uniform\"\ntempo_bpm = 100.0\n[mutation]\npitch_prob = 0.3\n",
        )
        .unwrap();
        let args = PipelineArgs {
            generation: GenerationArgs {
                config: Some(path),
                input: None,
                output: None,
                count: Some(5),
                sections: None,
                strategy: None,
                sigma_fraction: None,
                rank_feature: None,
                seed: None,
                mutate: None,
                mutation: MutationArgs {
                    extend_prob: Some(0.0),
                    ..Default::default()
                },
            },
            jobs: Some(3),
            tempo: None,
            sample_rate: None,
            token_format: None,
            midi: false,
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.count, 5);
        assert_eq!(c.strategy, StrategyName::Uniform);
        assert_eq!(c.tempo_bpm, 100.0);
        assert_eq!((c.mutation.pitch_prob, c.mutation.extend_prob), (0.3, 0.0));
        assert_eq!(c.jobs, Some(3));
    }

    #[test]
    fn mutation_flags_layer_on_base() {
        let base = MutationParams::default();
        let out = MutationArgs {
            pitch_sigma: Some(4.0),
            no_snap: true,
            ..Default::default()
        }
        .apply(base);
        assert_eq!(out.pitch_sigma, 4.0);
        assert_eq!(out.pitch_prob, base.pitch_prob);
        assert!(!out.snap_to_scale);
    }
}
