//! Sequential against rayon-parallel execution on the three data-parallel hot spots.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use orpheus::augment::{build_section_pool, generate_score, GenerationParams, SectionPool};
use orpheus::fixtures::random_normalized_score;
use orpheus::metrics::wer_corpus_with;
use orpheus::par::{map_range, Execution};
use orpheus::rng::seeded;
use orpheus::signal::{log_mel_spectrogram_with, MelParams};
use orpheus::synth::{render_wav, score_to_midi, write_wav};
use orpheus::tokenizer::{encode, TokenId};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn pool() -> SectionPool {
    let mut rng = seeded(1);
    let scores: Vec<_> = (0..20)
        .map(|i| random_normalized_score(&mut rng, 8, &i.to_string()))
        .collect();
    build_section_pool(&scores).unwrap()
}

fn generate_and_render(c: &mut Criterion) {
    let pool = pool();
    let params = GenerationParams::default();
    let mut group = c.benchmark_group("generate_render_16");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                map_range(exec, 0..16, |k| {
                    let score = generate_score(&pool, &params, k).unwrap();
                    write_wav(&render_wav(&score_to_midi(&score, 213.0), 16_000)).len()
                })
            })
        });
    }
    group.finish();
}

fn corpus_wer(c: &mut Criterion) {
    let mut rng = seeded(2);
    let pairs: Vec<(Vec<TokenId>, Vec<TokenId>)> = (0..200)
        .map(|_| {
            (
                encode(&random_normalized_score(&mut rng, 8, "")).unwrap(),
                encode(&random_normalized_score(&mut rng, 8, "")).unwrap(),
            )
        })
        .collect();
    let mut group = c.benchmark_group("wer_corpus_200");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| wer_corpus_with(black_box(&pairs), exec).unwrap())
        });
    }
    group.finish();
}

fn mel(c: &mut Criterion) {
    let mut rng = seeded(3);
    let audio = render_wav(
        &score_to_midi(&random_normalized_score(&mut rng, 8, ""), 213.0),
        16_000,
    );
    let params = MelParams::default();
    let mut group = c.benchmark_group("log_mel_9s");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| log_mel_spectrogram_with(black_box(&audio), &params, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, generate_and_render, corpus_wer, mel);
criterion_main!(benches);
