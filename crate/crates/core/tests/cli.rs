use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_zcp-har");

const SMALL: &str = r#"
experiment_id = "small"
jobs = 1

[data.synthetic]
classes = 3
users = 5
duration_s = 24.0

[search_space]
cnn_depth = { min = 1, max = 2 }
cnn_channels = { min = 8, max = 8 }
cnn_kernel = { min = 2, max = 5 }
lstm_depth = { min = 2, max = 2 }
lstm_hidden = { min = 8, max = 8 }
sample_count = 12
num_classes = 3

[train]
epochs = 1
lr = 0.01
batch_size = 32

[seeds]
sampler = 1
init = 2
data = 3
score_batch = 4
train = 5
noise = 6
random_search = 7
synthetic = 8
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--config").arg(config).args(args).output().unwrap()
}

fn ok(config: &Path, args: &[&str]) -> String {
    let out = run(config, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn ledger_kinds(dir: &Path, kind: &str) -> usize {
    fs::read_to_string(dir.join("ledger.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| l.contains(&format!("\"kind\":\"{kind}\"")))
        .count()
}

#[test]
fn pipeline_runs_resumes_and_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let exp = tmp.path().join("experiments/small");

    assert_eq!(ok(&cfg, &["sample"]).trim(), "sample: 12 added, 0 already complete");
    ok(&cfg, &["score"]);
    let scores = fs::read_to_string(exp.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().next(), Some("spec_hash,proxy,value,degenerate_flag"));
    assert_eq!(scores.lines().count(), 1 + 12 * 10);

    assert_eq!(
        ok(&cfg, &["train", "--top-k", "10", "--proxy", "ensemble"]).trim(),
        "train: 10 added, 0 already complete"
    );
    assert_eq!(ledger_kinds(&exp, "run_record"), 10);
    assert_eq!(
        ok(&cfg, &["train", "--top-k", "10", "--proxy", "ensemble"]).trim(),
        "train: 0 added, 10 already complete"
    );
    assert_eq!(ok(&cfg, &["train", "--all"]).trim(), "train: 2 added, 10 already complete");

    ok(&cfg, &["evaluate"]);
    let report = fs::read_to_string(exp.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("proxy,metric,value"));
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3, "{line}");
        if fields[1].starts_with("delta") {
            assert!(fields[2].parse::<f64>().unwrap().is_finite(), "{line}");
        }
    }
    ok(&cfg, &["noise-eval"]);
    assert!(exp.join("noise_report.csv").exists());

    // Every stage again: nothing new is recorded.
    let ledger = fs::read(exp.join("ledger.jsonl")).unwrap();
    let artifacts: Vec<Vec<u8>> = ["scores.csv", "runs.csv", "report.csv", "noise_report.csv"]
        .iter()
        .map(|f| fs::read(exp.join(f)).unwrap())
        .collect();
    assert_eq!(ok(&cfg, &["sample"]).trim(), "sample: 0 added, 12 already complete");
    assert_eq!(ok(&cfg, &["score"]).trim(), "score: 0 added, 12 already complete");
    assert_eq!(ok(&cfg, &["train", "--all"]).trim(), "train: 0 added, 12 already complete");
    ok(&cfg, &["evaluate"]);
    ok(&cfg, &["noise-eval"]);
    assert_eq!(fs::read(exp.join("ledger.jsonl")).unwrap(), ledger);
    for (f, before) in ["scores.csv", "runs.csv", "report.csv", "noise_report.csv"].iter().zip(&artifacts) {
        assert_eq!(&fs::read(exp.join(f)).unwrap(), before, "{f} changed");
    }
}

#[test]
fn stages_out_of_order_fail_cleanly() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for args in [&["score"][..], &["train", "--all"], &["evaluate"], &["noise-eval"]] {
        let out = run(&cfg, args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    ok(&cfg, &["sample"]);
    assert_eq!(run(&cfg, &["train", "--all"]).status.code(), Some(1));
}

#[test]
fn invalid_configuration_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        SMALL.replace("jobs = 1", "jobs = 1\nunknown_key = 3"),
        SMALL.replace("[data.synthetic]", "[data]\nmanifest = \"missing.toml\"\n[data.synthetic]"),
        SMALL.replace("random_search = 7\n", ""),
        SMALL.replace("lr = 0.01", "lr = -1.0"),
        SMALL.replace("classes = 3", "classes = 1"),
    ];
    for text in &cases {
        let cfg = write_config(tmp.path(), text);
        let out = run(&cfg, &["sample"]);
        assert_eq!(out.status.code(), Some(1), "accepted:\n{text}");
        assert!(!out.stderr.is_empty());
    }
    let cfg = write_config(tmp.path(), SMALL);
    assert_ne!(run(&cfg, &["--jobs", "0", "sample"]).status.code(), Some(0));
    assert_ne!(run(&tmp.path().join("absent.toml"), &["sample"]).status.code(), Some(0));
    // --top-k without --proxy is a usage error.
    assert_ne!(run(&cfg, &["train", "--top-k", "3"]).status.code(), Some(0));
}

#[test]
fn synthesised_corpus_feeds_a_manifest_experiment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let manifest = ok(&cfg, &["synth"]).trim().to_owned();
    assert!(Path::new(&manifest).exists());

    let from_files = SMALL
        .replace("experiment_id = \"small\"", "experiment_id = \"files\"")
        .replace(
            "[data.synthetic]\nclasses = 3\nusers = 5\nduration_s = 24.0\n",
            &format!("[data]\nmanifest = {manifest:?}\n"),
        )
        .replace("synthetic = 8\n", "");
    let cfg = write_config(tmp.path(), &from_files);
    ok(&cfg, &["sample"]);
    ok(&cfg, &["score"]);
    ok(&cfg, &["--experiment", "other", "sample"]);
    assert!(tmp.path().join("experiments/files/scores.csv").exists());
    assert!(tmp.path().join("experiments/other/ledger.jsonl").exists());
}
