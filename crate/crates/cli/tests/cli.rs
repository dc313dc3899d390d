use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const TINY: &str = r#"
seed = 3

[pipeline.train]
batch_size = 4

[pipeline.similarity]
frame_state_dim = 8
embedding_dim = 8

[pipeline.normalizer]
state_dim = 8

[pipeline.action_pairs]
train = 8
validation = 4
test = 4

[pipeline.user_pairs]
train = 8
validation = 4
test = 4

[pipeline.anonymizer_pairs]
train = 4
validation = 2
test = 0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_motionmask"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) -> Output {
    run(&[
        "synth", "--out", s(dir), "--users", "4", "--activities", "2", "--recordings", "8", "--duration", "3", "--seed",
        seed,
    ])
}

/// Synthetic corpus plus a manifest with train/validation/test splits.
fn corpus(tmp: &TempDir) -> (PathBuf, PathBuf) {
    let data = tmp.path().join("data");
    let o = synth(&data, "5");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = tmp.path().join("split.json");
    let o = run(&["ingest", "--data", s(&data), "--out", s(&manifest), "--validation", "2", "--test", "2", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (data, manifest)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    let o = run(&["train", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for stage in ["identifier", "action-sim", "user-sim", "anonymizer", "normalizer"] {
        assert!(text.contains(stage), "{stage} missing from help");
    }
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["synth"])), 1);
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("missing.json");
    let o = run(&["train", "action-sim", "--manifest", s(&missing), "--bundle", s(&tmp.path().join("b.bin"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = run(&["--set", "nonsense.key=1", "bench", "--default-architecture", "--frames", "1"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (d, seed) in [(&a, "1"), (&b, "1"), (&c, "2")] {
        assert_eq!(code(&synth(d, seed)), 0);
    }
    let (fa, fb, fc) = (files(&a), files(&b), files(&c));
    assert_eq!(fa.len(), 4 * 8 + 1);
    assert_eq!(fa, fb);
    assert_ne!(fa, fc);
}

#[test]
fn corrupt_recording_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = corpus(&tmp);
    let victim = files(&data).into_iter().find(|(n, _)| n.ends_with(".jsonl")).unwrap().0;
    std::fs::write(data.join(&victim), "{\"not\": \"a header\"}\n").unwrap();
    let o = run(&["ingest", "--data", s(&data), "--out", s(&tmp.path().join("m.json")), "--strict"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains(&victim));
}

#[test]
fn anonymizer_requires_trained_scorers() {
    let tmp = TempDir::new().unwrap();
    let (_, manifest) = corpus(&tmp);
    let bundle = tmp.path().join("bundle.bin");
    let o = run(&["train", "anonymizer", "--manifest", s(&manifest), "--bundle", s(&bundle)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("motionmask train action-sim"), "{}", stderr(&o));
    let o = run(&["train", "normalizer", "--manifest", s(&manifest), "--bundle", s(&bundle)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("motionmask train anonymizer"), "{}", stderr(&o));
    assert!(!bundle.exists());
}

#[test]
fn end_to_end_smoke() {
    let tmp = TempDir::new().unwrap();
    let (data, manifest) = corpus(&tmp);
    let config = tmp.path().join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let bundle = tmp.path().join("bundle.bin");
    let common = ["--config", s(&config), "--manifest", s(&manifest), "--bundle", s(&bundle), "--epochs", "1"];
    for stage in ["action-sim", "user-sim", "anonymizer", "normalizer"] {
        let mut args = vec!["train", stage];
        args.extend_from_slice(&common);
        if stage == "anonymizer" {
            args.extend_from_slice(&["--pretrain-epochs", "1"]);
        }
        let o = run(&args);
        assert_eq!(code(&o), 0, "{stage}: {}", stderr(&o));
        let report = PathBuf::from(format!("{}.{stage}.json", bundle.display()));
        assert!(report.exists(), "{stage} report missing");
    }

    let recording = files(&data).into_iter().find(|(n, _)| n.ends_with(".jsonl")).unwrap().0;
    let masked = tmp.path().join("masked.jsonl");
    let o = run(&["anonymize", "--bundle", s(&bundle), "--input", s(&data.join(&recording)), "--output", s(&masked)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let source = std::fs::read_to_string(data.join(&recording)).unwrap();
    let output = std::fs::read_to_string(&masked).unwrap();
    assert_eq!(output.lines().count(), source.lines().count());

    let mut child = bin()
        .args(["stream", "--bundle", s(&bundle)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let frames: Vec<&str> = source.lines().skip(1).take(20).collect();
    child.stdin.take().unwrap().write_all((frames.join("\n") + "\n").as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let streamed: Vec<&str> = std::str::from_utf8(&o.stdout).unwrap().lines().collect();
    assert_eq!(streamed.len(), 20);
    assert_eq!(streamed, output.lines().skip(1).take(20).collect::<Vec<_>>());

    let bench = tmp.path().join("latency.json");
    let o = run(&["bench", "--bundle", s(&bundle), "--frames", "50", "--out", s(&bench)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(bench.exists());

    let reports = tmp.path().join("reports");
    let o = run(&[
        "evaluate", "--config", s(&config), "--bundle", s(&bundle), "--manifest", s(&manifest), "--out", s(&reports),
        "--users", "4", "--per-session", "2", "--identifier", "forest", "--trees", "5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json = reports.join("evaluation.json");
    assert!(json.exists() && reports.join("evaluation.md").exists());
    let o = run(&["report", "--input", s(&json)]);
    assert_eq!(code(&o), 0);
    let md = String::from_utf8_lossy(&o.stdout);
    assert!(md.contains("Unmodified") && md.contains("adaptive"), "{md}");
}
