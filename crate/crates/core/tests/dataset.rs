//! Parsing through generation and tokenization on realistic tunes.

use orpheus::abc::strip_metadata;
use orpheus::augment::{
    build_section_pool, generate_dataset, generate_score, GenerationParams, MutationParams,
    SamplingStrategy,
};
use orpheus::fixtures::random_abc_tune;
use orpheus::metrics::{wer, wer_corpus_with};
use orpheus::par::Execution;
use orpheus::pipeline::load_source;
use orpheus::rng::seeded;
use orpheus::signal::{log_mel_spectrogram_with, MelParams};
use orpheus::synth::{render_wav, score_to_midi};
use orpheus::tokenizer::{
    decode, encode, parse_token_text, render_token_text, tokens_from_bytes, tokens_to_bytes,
};
use orpheus::Score;

fn corpus(n: usize) -> Vec<Score> {
    let mut rng = seeded(200);
    (0..n)
        .map(|i| {
            load_source(&random_abc_tune(&mut rng, i, 8), &format!("s{i}"))
                .unwrap()
                .0
        })
        .collect()
}

#[test]
fn random_tunes_normalize_and_stay_clean() {
    for s in corpus(30) {
        s.check_normalized().unwrap();
        assert_eq!(s.measures.len(), 8);
    }
}

#[test]
fn metadata_is_gone_after_cleaning() {
    let mut rng = seeded(201);
    let tune = random_abc_tune(&mut rng, 1, 2);
    let cleaned = strip_metadata(&tune);
    assert!(!cleaned.contains("T:") && !cleaned.contains("C:Generator"));
    assert!(cleaned.contains("K:"));
}

#[test]
fn generated_scores_tokenize_losslessly() {
    let pool = build_section_pool(&corpus(20)).unwrap();
    for strategy in [SamplingStrategy::Uniform, SamplingStrategy::gaussian()] {
        let params = GenerationParams {
            strategy,
            seed: 5,
            mutation: Some(MutationParams::default()),
            ..Default::default()
        };
        for score in generate_dataset(&pool, 40, params) {
            let score = score.unwrap();
            let tokens = encode(&score).unwrap();
            let text = render_token_text(&tokens);
            assert_eq!(parse_token_text(&text).unwrap(), tokens);
            assert_eq!(
                tokens_from_bytes(&tokens_to_bytes(&tokens)).unwrap(),
                tokens
            );
            let (back, report) = decode(&tokens);
            assert!(report.is_clean());
            assert_eq!(back.measures, score.measures);
        }
    }
}

#[test]
fn generation_depends_only_on_seed_and_index() {
    let pool = build_section_pool(&corpus(10)).unwrap();
    let params = GenerationParams {
        seed: 77,
        ..Default::default()
    };
    let all: Vec<Score> = generate_dataset(&pool, 20, params)
        .map(Result::unwrap)
        .collect();
    for k in [0u64, 7, 19] {
        assert_eq!(generate_score(&pool, &params, k).unwrap(), all[k as usize]);
    }
    let other = generate_score(&pool, &GenerationParams { seed: 78, ..params }, 7).unwrap();
    assert_ne!(other.measures, all[7].measures);
}

#[test]
fn sequential_and_parallel_paths_agree() {
    let scores = corpus(6);
    let audio = render_wav(&score_to_midi(&scores[0], 213.0), 16_000);
    let p = MelParams::default();
    assert_eq!(
        log_mel_spectrogram_with(&audio, &p, Execution::Sequential).unwrap(),
        log_mel_spectrogram_with(&audio, &p, Execution::Parallel).unwrap()
    );
    let pairs: Vec<_> = scores
        .windows(2)
        .map(|w| (encode(&w[0]).unwrap(), encode(&w[1]).unwrap()))
        .collect();
    let seq = wer_corpus_with(&pairs, Execution::Sequential).unwrap();
    assert_eq!(seq, wer_corpus_with(&pairs, Execution::Parallel).unwrap());
    let errors: usize = pairs.iter().map(|(r, h)| wer(r, h).unwrap().errors()).sum();
    assert_eq!(seq.errors(), errors);
}
