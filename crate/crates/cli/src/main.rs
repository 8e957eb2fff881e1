//! `orpheus`: ABC corpus to paired audio and token dataset, one stage per subcommand.

mod config;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use orpheus::abc::{parse_abc, strip_metadata, write_abc};
use orpheus::augment::{build_section_pool_with, generate_score_logged, mutate, MutationLog};
use orpheus::metrics::wer_corpus;
use orpheus::normalize::normalize;
use orpheus::pipeline::{self, load_corpus, mutate_sources, record_seed, MutateStage, TokenFormat};
use orpheus::score::Score;
use orpheus::signal::{log_mel_spectrogram, MelParams};
use orpheus::synth::{self, read_wav, render_wav, score_to_midi, write_smf, write_wav};
use orpheus::tokenizer::{
    decode, encode, parse_token_text, render_token_text, tokens_from_bytes, tokens_to_bytes,
    vocabulary, TokenId,
};

use config::{resolve_seed, GenerationArgs, PipelineArgs};

/// Exit status for a run that finished but skipped some inputs.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(
    name = "orpheus",
    version,
    about = "Build paired audio and score-token datasets from ABC tunes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strip metadata headers and ornaments from an ABC file.
    Clean(IoArgs),
    /// Parse, regrid, transpose to C and repair an ABC file.
    Normalize {
        #[command(flatten)]
        io: IoArgs,
        /// Write the repair report JSON here instead of stderr.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply seeded pitch mutation and duration extension to a score.
    Mutate {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        mutation: config::MutationArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the mutation log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Recombine pooled measures from a corpus into new ABC scores.
    GenDataset(GenerationArgs),
    /// Encode a score as tokens.
    Tokenize {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
    /// Decode tokens back to ABC, repairing malformed sequences.
    Detokenize {
        #[command(flatten)]
        io: IoArgs,
        /// Defaults to binary for `.tok` files and text otherwise.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Render an ABC or token file to WAV (and optionally SMF).
    Render {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = synth::DEFAULT_TEMPO_BPM)]
        tempo: f64,
        #[arg(long, default_value_t = synth::DEFAULT_SAMPLE_RATE)]
        sample_rate: u32,
        /// Also write a Standard MIDI File.
        #[arg(long)]
        midi: Option<PathBuf>,
    },
    /// Compute the log-mel feature matrix of a 16 kHz WAV.
    Features {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Token-level word error rate.
    Wer(WerArgs),
    /// Run the full dataset build.
    Pipeline(PipelineArgs),
    /// Print the token vocabulary as JSON.
    Vocab,
}

#[derive(Args)]
struct IoArgs {
    /// Input file, or `-` for stdin.
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

#[derive(Args)]
struct WerArgs {
    /// Reference token file, one sequence per line.
    #[arg(required_unless_present = "manifest")]
    reference: Option<PathBuf>,
    /// Hypothesis token file, paired with the reference line by line.
    #[arg(required_unless_present = "manifest")]
    hypothesis: Option<PathBuf>,
    /// JSON Lines file holding both sequences as string fields.
    #[arg(long, conflicts_with_all = ["reference", "hypothesis"])]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "token_text")]
    ref_column: String,
    #[arg(long, default_value = "hypothesis")]
    hyp_column: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

enum Outcome {
    Done,
    Partial,
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf)?;
        return Ok(buf);
    }
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_input(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

/// ABC text terminated by a newline, for files and terminals.
fn abc_text(score: &Score) -> Result<String> {
    Ok(write_abc(score)? + "\n")
}

fn load_normalized(path: &Path) -> Result<Score> {
    let score = parse_abc(&strip_metadata(&read_text(path)?))
        .with_context(|| format!("parsing {}", path.display()))?;
    let (score, report) = normalize(&score)?;
    log::info!("{}: {}", path.display(), serde_json::to_string(&report)?);
    Ok(score)
}

fn is_binary_tokens(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "tok")
}

fn read_tokens(path: &Path, format: Option<FormatArg>) -> Result<Vec<TokenId>> {
    let binary = format.map_or_else(|| is_binary_tokens(path), |f| f == FormatArg::Binary);
    Ok(if binary {
        tokens_from_bytes(&read_input(path)?)?
    } else {
        parse_token_text(&read_text(path)?)?
    })
}

/// Decodes tokens, reporting any recovery on stderr.
fn decode_reported(tokens: &[TokenId]) -> (Score, bool) {
    let (score, report) = decode(tokens);
    if !report.is_clean() {
        log::warn!("token sequence needed recovery: {report:?}");
    }
    (score, report.is_clean())
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Clean(io) => {
            let cleaned = strip_metadata(&read_text(&io.input)?);
            write_output(io.output.as_deref(), cleaned.as_bytes())?;
        }
        Command::Normalize { io, report } => {
            let score = parse_abc(&strip_metadata(&read_text(&io.input)?))?;
            let (score, repair) = normalize(&score)?;
            write_output(io.output.as_deref(), abc_text(&score)?.as_bytes())?;
            let json = json_line(&repair)?;
            match report {
                Some(p) => {
                    fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?
                }
                None => eprint!("{json}"),
            }
        }
        Command::Mutate {
            io,
            mutation,
            seed,
            log,
        } => {
            let score = load_normalized(&io.input)?;
            let params = mutation
                .apply(Default::default())
                .with_seed(resolve_seed(seed, 0)?);
            params.validate()?;
            let (mutated, entries) = mutate(&score, &params);
            write_output(io.output.as_deref(), abc_text(&mutated)?.as_bytes())?;
            if let Some(p) = log {
                fs::write(&p, entries.to_json_lines())
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::GenDataset(args) => return gen_dataset(args),
        Command::Tokenize { io, format } => {
            let tokens = encode(&load_normalized(&io.input)?)?;
            let bytes = match format {
                FormatArg::Text => (render_token_text(&tokens) + "\n").into_bytes(),
                FormatArg::Binary => tokens_to_bytes(&tokens),
            };
            write_output(io.output.as_deref(), &bytes)?;
        }
        Command::Detokenize { io, format } => {
            let (score, clean) = decode_reported(&read_tokens(&io.input, format)?);
            write_output(io.output.as_deref(), abc_text(&score)?.as_bytes())?;
            if !clean {
                return Ok(Outcome::Partial);
            }
        }
        Command::Render {
            input,
            output,
            tempo,
            sample_rate,
            midi,
        } => {
            if !(tempo.is_finite() && tempo > 0.0) || sample_rate == 0 {
                bail!("tempo and sample rate must be positive");
            }
            let score = if input.extension().is_some_and(|e| e == "abc") {
                load_normalized(&input)?
            } else {
                decode_reported(&read_tokens(&input, None)?).0
            };
            let seq = score_to_midi(&score, tempo);
            if let Some(p) = midi {
                fs::write(&p, write_smf(&seq))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            let audio = render_wav(&seq, sample_rate);
            fs::write(&output, write_wav(&audio))
                .with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Features { input, output } => {
            let audio = read_wav(&read_input(&input)?)?;
            let mel = log_mel_spectrogram(&audio, &MelParams::default())?;
            fs::write(&output, mel.to_bytes())
                .with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Wer(args) => {
            let pairs = wer_pairs(&args)?;
            let result = wer_corpus(&pairs)?;
            print!("{}", json_line(&result)?);
        }
        Command::Pipeline(args) => {
            let config = args.resolve()?;
            let summary = pipeline::run_pipeline(&config)?;
            eprintln!(
                "{} records from {} sources ({} skipped, {} pooled sections) -> {}",
                summary.records,
                summary.sources_used,
                summary.skipped.len(),
                summary.pool_size,
                summary.manifest_path.display()
            );
            if summary.is_partial() {
                return Ok(Outcome::Partial);
            }
        }
        Command::Vocab => print!("{}", vocabulary().to_json()),
    }
    Ok(Outcome::Done)
}

fn token_lines(path: &Path) -> Result<Vec<Vec<TokenId>>> {
    read_text(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_token_text(l).map_err(Into::into))
        .collect()
}

fn wer_pairs(args: &WerArgs) -> Result<Vec<(Vec<TokenId>, Vec<TokenId>)>> {
    if let Some(path) = &args.manifest {
        let column = |row: &serde_json::Value, name: &str, line: usize| -> Result<Vec<TokenId>> {
            let text = row
                .get(name)
                .and_then(|v| v.as_str())
                .ok_or_else(|| anyhow!("line {line}: missing string field {name:?}"))?;
            Ok(parse_token_text(text)?)
        };
        return read_text(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let row: serde_json::Value = serde_json::from_str(l)?;
                Ok((
                    column(&row, &args.ref_column, i + 1)?,
                    column(&row, &args.hyp_column, i + 1)?,
                ))
            })
            .collect();
    }
    let (r, h) = (
        args.reference.as_deref().expect("clap requires reference"),
        args.hypothesis
            .as_deref()
            .expect("clap requires hypothesis"),
    );
    let (refs, hyps) = (token_lines(r)?, token_lines(h)?);
    if refs.len() != hyps.len() {
        bail!(
            "{} reference lines but {} hypothesis lines",
            refs.len(),
            hyps.len()
        );
    }
    Ok(refs.into_iter().zip(hyps).collect())
}

#[derive(Serialize)]
struct GeneratedRecord<'a> {
    id: &'a str,
    abc_path: String,
    seed: u64,
}

fn gen_dataset(args: GenerationArgs) -> Result<Outcome> {
    let config = args.resolve()?;
    config.mutation.validate()?;
    let corpus = load_corpus(&config.input_dir)?;
    if corpus.scores.is_empty() {
        bail!("no usable scores in {}", config.input_dir.display());
    }
    let mut mutation_log = String::new();
    let sources = if config.mutate == MutateStage::BeforePool {
        let mutated = mutate_sources(&corpus.scores, &config.mutation, config.seed);
        for (i, (_, log)) in mutated.iter().enumerate() {
            append_log(&mut mutation_log, &format!("source-{i}"), log)?;
        }
        mutated.into_iter().map(|(s, _)| s).collect()
    } else {
        corpus.scores.clone()
    };
    let pool = build_section_pool_with(&sources, config.rank_feature)?;
    let params = config.generation_params();

    let out = &config.output_dir;
    ensure_dir(&out.join("abc"))?;
    let mut manifest = String::new();
    for k in 0..config.count {
        let (score, log) = generate_score_logged(&pool, &params, k)?;
        let abc_path = format!("abc/{}.abc", score.source_id);
        fs::write(out.join(&abc_path), abc_text(&score)?)?;
        append_log(&mut mutation_log, &score.source_id, &log)?;
        manifest += &json_line(&GeneratedRecord {
            id: &score.source_id,
            abc_path,
            seed: record_seed(config.seed, k),
        })?;
    }
    fs::write(out.join("manifest.jsonl"), manifest)?;
    if config.mutate != MutateStage::None {
        fs::write(out.join("mutations.jsonl"), mutation_log)?;
    }
    if config.token_format == TokenFormat::Binary {
        log::debug!("token format is ignored by gen-dataset");
    }
    Ok(if corpus.skipped.is_empty() {
        Outcome::Done
    } else {
        Outcome::Partial
    })
}

fn append_log(out: &mut String, id: &str, log: &MutationLog) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a, T> {
        score: &'a str,
        #[serde(flatten)]
        entry: T,
    }
    for entry in &log.entries {
        *out += &json_line(&Line { score: id, entry })?;
    }
    Ok(())
}
