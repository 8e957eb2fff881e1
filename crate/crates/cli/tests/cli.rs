use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use orpheus::fixtures::random_abc_tune;
use orpheus::pipeline::read_manifest;
use orpheus::rng::seeded;

const TUNE: &str = "X:3\nT:Title\nM:4/4\nL:1/8\nK:G\n\"G\"GABc d2B2|\"D7\"A2F2 D4|\n";

fn orpheus(args: &[&str]) -> Output {
    orpheus_env(args, None)
}

fn orpheus_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_orpheus"));
    cmd.args(args).env_remove("ORPHEUS_SEED");
    if let Some(s) = seed {
        cmd.env("ORPHEUS_SEED", s);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus(dir: &Path, n: usize) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = seeded(300);
    for i in 0..n {
        fs::write(
            dir.join(format!("{i:02}.abc")),
            random_abc_tune(&mut rng, i, 4),
        )
        .unwrap();
    }
}

#[test]
fn clean_normalize_tokenize_detokenize() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.abc");
    fs::write(&src, TUNE).unwrap();

    let cleaned = stdout(&orpheus(&["clean", p(&src)]));
    assert!(!cleaned.contains("T:Title") && cleaned.contains("K:G"));

    let report = dir.path().join("r.json");
    let out = orpheus(&["normalize", p(&src), "--report", p(&report)]);
    assert!(out.status.success());
    let normalized = stdout(&out);
    assert!(
        normalized.starts_with("X:3\nK:C\nM:4/4\nL:1/192\n"),
        "{normalized}"
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["untouched"], 2);

    let tokens = stdout(&orpheus(&["tokenize", p(&src)]));
    // G up a fourth to C is the shorter way.
    assert!(
        tokens.starts_with("BOS ROOT_C QUAL_maj PITCH_72 DUR_24"),
        "{tokens}"
    );
    assert!(tokens.trim_end().ends_with("BAR EOS"));
    let tok_file = dir.path().join("t.txt");
    fs::write(&tok_file, &tokens).unwrap();
    let back = orpheus(&["detokenize", p(&tok_file)]);
    assert!(back.status.success());
    assert_eq!(stdout(&back), normalized.replacen("X:3\n", "", 1));

    let bin = dir.path().join("t.tok");
    assert!(
        orpheus(&["tokenize", p(&src), "--format", "binary", "-o", p(&bin)])
            .status
            .success()
    );
    assert_eq!(fs::read(&bin).unwrap().len() % 2, 0);
    assert_eq!(stdout(&orpheus(&["detokenize", p(&bin)])), stdout(&back));
}

#[test]
fn malformed_tokens_decode_with_partial_status() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.txt");
    fs::write(&f, "BOS PITCH_60 DUR_96 DUR_4 BAR EOS\n").unwrap();
    let out = orpheus(&["detokenize", p(&f)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout(&out), "K:C\nM:4/4\nL:1/192\nC96z96|\n");
    fs::write(&f, "BOS FOO EOS").unwrap();
    assert_eq!(orpheus(&["detokenize", p(&f)]).status.code(), Some(1));
}

#[test]
fn render_writes_wav_and_midi_then_features() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.abc");
    fs::write(&src, TUNE).unwrap();
    let wav = dir.path().join("t.wav");
    let mid = dir.path().join("t.mid");
    let out = orpheus(&[
        "render",
        p(&src),
        "-o",
        p(&wav),
        "--midi",
        p(&mid),
        "--tempo",
        "120",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reader = hound::WavReader::open(&wav).unwrap();
    // Two measures at 120 BPM plus the release tail.
    assert_eq!(reader.duration(), 4 * 16_000 + 800);
    assert!(fs::read(&mid).unwrap().starts_with(b"MThd"));

    let mel = dir.path().join("t.mel");
    assert!(orpheus(&["features", p(&wav), "-o", p(&mel)])
        .status
        .success());
    let bytes = fs::read(&mel).unwrap();
    assert_eq!(&bytes[..4], b"OMEL");
    let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    assert_eq!(frames, (4 * 16_000 + 800) / 160);
    assert_eq!(bytes.len(), 12 + 80 * frames * 4);

    let slow = dir.path().join("s.wav");
    orpheus(&["render", p(&src), "-o", p(&slow), "--sample-rate", "8000"]);
    assert_eq!(
        orpheus(&["features", p(&slow), "-o", p(&mel)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn wer_from_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref.txt");
    let h = dir.path().join("hyp.txt");
    fs::write(
        &r,
        "BOS PITCH_60 DUR_96 PITCH_62 DUR_96 BAR EOS\nBOS REST DUR_192 BAR EOS\n",
    )
    .unwrap();
    fs::write(
        &h,
        "BOS PITCH_60 DUR_96 PITCH_64 DUR_96 BAR EOS\nBOS REST DUR_192 EOS\n",
    )
    .unwrap();
    let out = orpheus(&["wer", p(&r), p(&h)]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "{\"wer\":0.16666666666666666,\"S\":1,\"D\":1,\"I\":0,\"N\":12}\n"
    );

    let m = dir.path().join("m.jsonl");
    fs::write(
        &m,
        "{\"token_text\":\"BOS BAR EOS\",\"hypothesis\":\"BOS EOS\"}\n",
    )
    .unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&orpheus(&["wer", "--manifest", p(&m)]))).unwrap();
    assert_eq!((json["D"].as_u64(), json["N"].as_u64()), (Some(1), Some(3)));

    fs::write(&h, "BOS EOS\n").unwrap();
    assert_eq!(orpheus(&["wer", p(&r), p(&h)]).status.code(), Some(1));
}

#[test]
fn mutate_is_seeded_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.abc");
    fs::write(&src, TUNE).unwrap();
    let log = dir.path().join("log.jsonl");
    let run = |seed: &str| {
        stdout(&orpheus(&[
            "mutate",
            p(&src),
            "--pitch-prob",
            "1",
            "--seed",
            seed,
            "--log",
            p(&log),
        ]))
    };
    assert_eq!(run("4"), run("4"));
    assert_ne!(run("4"), run("5"));
    let lines = fs::read_to_string(&log).unwrap();
    assert!(lines.lines().all(|l| l.contains("\"old_pitch\"")));
    let env = orpheus_env(
        &["mutate", p(&src), "--pitch-prob", "1", "--seed", "5"],
        Some("4"),
    );
    assert_eq!(stdout(&env), run("4"));
    assert_eq!(
        orpheus(&["mutate", p(&src), "--pitch-prob", "2"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn gen_dataset_writes_scores_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    corpus(&input, 5);
    let out = dir.path().join("out");
    let status = orpheus(&[
        "gen-dataset",
        "-i",
        p(&input),
        "-o",
        p(&out),
        "--count",
        "6",
        "--mutate",
        "after-generate",
        "--pitch-prob",
        "0.5",
        "--strategy",
        "uniform",
    ]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 6);
    for i in 0..6 {
        let abc = fs::read_to_string(out.join(format!("abc/gen-{i:06}.abc"))).unwrap();
        assert_eq!(abc.matches('|').count(), 8);
    }
    assert!(fs::read_to_string(out.join("mutations.jsonl"))
        .unwrap()
        .contains("\"score\":\"gen-"));
}

#[test]
fn pipeline_exit_codes_and_seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    corpus(&input, 4);
    let run = |out: &str, extra: &[&str], env: Option<&str>| {
        let out = dir.path().join(out);
        let mut args = vec!["pipeline", "-i", p(&input), "-o", p(&out), "--count", "5"];
        args.extend_from_slice(extra);
        let status = orpheus_env(&args, env).status.code();
        (status, fs::read(out.join("manifest.jsonl")).ok())
    };
    let (code, a) = run("a", &["--seed", "1"], None);
    assert_eq!(code, Some(0));
    let (_, b) = run("b", &["--seed", "2"], None);
    let (_, c) = run("c", &["--seed", "2"], Some("1"));
    assert_ne!(a, b);
    assert_eq!(a, c);

    let records = read_manifest(&dir.path().join("a/manifest.jsonl")).unwrap();
    assert_eq!(records.len(), 5);
    assert!(dir.path().join("a").join(&records[4].wav_path).is_file());

    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "count = 3\nseed = 1\nsections_per_score = 2\n").unwrap();
    let out = dir.path().join("d");
    let args = [
        "pipeline",
        "--config",
        p(&cfg),
        "-i",
        p(&input),
        "-o",
        p(&out),
        "--count",
        "2",
    ];
    assert_eq!(orpheus(&args).status.code(), Some(0));
    let records = read_manifest(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].token_text.matches("BAR").count(), 2);

    fs::write(input.join("zz.abc"), "X:1\nK:C\nC4 &|\n").unwrap();
    assert_eq!(run("e", &[], None).0, Some(2));
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let fatal = orpheus(&["pipeline", "-i", p(&empty), "-o", p(&dir.path().join("f"))]);
    assert_eq!(fatal.status.code(), Some(1));
    assert_eq!(
        orpheus_env(&["pipeline", "-i", p(&input)], Some("abc"))
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn vocab_lists_every_symbol() {
    let json: serde_json::Value = serde_json::from_str(&stdout(&orpheus(&["vocab"]))).unwrap();
    let entries = json.as_array().unwrap();
    assert_eq!(entries.len(), 135);
    assert_eq!(entries[134]["symbol"], "DUR_192");
}
