mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::tree_contents;

const TINY_CONFIG: &str = "\
synth_classes = 3
synth_subjects = 4
synth_reps = 2
synth_frame_height = 8
synth_frame_width = 10
synth_min_frames = 4
synth_max_frames = 6
encoder_hidden = 8
bottleneck = 3
lstm_hidden = 4
blstm_hidden = 4
pretrain_epochs = 2
pretrain_batch = 10
batch_utterances = 3
max_epochs = 3
train_subjects = 1,2
val_subjects = 3
test_subjects = 4
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2evsr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs the whole pipeline into `root`; returns the paths it produced.
fn pipeline(root: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = root.join("tiny.conf");
    fs::create_dir_all(root).unwrap();
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let data = root.join("data");
    let enc = root.join("enc");
    let model_dir = root.join("model");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    for stream in ["raw", "diff"] {
        ok(&["pretrain", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&enc), "--stream", stream]);
    }
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--dataset",
        s(&data),
        "--out",
        s(&model_dir),
        "--raw-encoder",
        s(&enc.join("encoder_raw.ckpt")),
        "--diff-encoder",
        s(&enc.join("encoder_diff.ckpt")),
    ]);
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--dataset",
        s(&data),
        "--out",
        s(&root.join("eval")),
        "--model",
        s(&model_dir.join("model.ckpt")),
    ]);
    (cfg, data, model_dir.join("model.ckpt"))
}

#[test]
fn full_pipeline_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("run");
    let (cfg, data, model) = pipeline(&root);

    let recon = fs::read_to_string(root.join("enc/pretrain_raw.csv")).unwrap();
    assert_eq!(recon.lines().count(), 1 + 2 * 2, "header plus epochs x layers");

    let history = fs::read_to_string(root.join("model/history.csv")).unwrap();
    let rows: Vec<&str> = history.lines().skip(1).collect();
    assert!(!rows.is_empty() && rows.len() <= 3);
    assert!(history.starts_with("epoch,train_loss,val_loss,val_accuracy\n"));

    let accuracy: f64 = fs::read_to_string(root.join("eval/accuracy.txt")).unwrap().trim().parse().unwrap();
    let confusion = fs::read_to_string(root.join("eval/confusion.csv")).unwrap();
    let counts: Vec<Vec<usize>> = confusion
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    let total: usize = counts.iter().flatten().sum();
    let trace: usize = (0..counts.len()).map(|i| counts[i][i]).sum();
    assert_eq!(total, 6);
    assert!((trace as f64 / total as f64 - accuracy).abs() < 1e-12);

    let echoed = fs::read_to_string(root.join("model/effective_config.txt")).unwrap();
    assert!(echoed.contains("lstm_hidden = 4\n") && echoed.contains("adadelta_rho = 0.95\n"));

    let utterance = data.join("s01/c0_r0");
    let pred_dir = root.join("pred");
    let printed = ok(&[
        "predict",
        "--config",
        s(&cfg),
        "--out",
        s(&pred_dir),
        "--model",
        s(&model),
        "--utterance",
        s(&utterance),
    ]);
    let probs = fs::read_to_string(pred_dir.join("probabilities.csv")).unwrap();
    let last: Vec<f64> = probs.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    for line in probs.lines().skip(1) {
        let sum: f64 = line.split(',').map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
    let argmax = (0..last.len()).fold(0, |b, i| if last[i] > last[b] { i } else { b });
    assert_eq!(printed.trim(), argmax.to_string());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("run");
    pipeline(&root);
    let first = tree_contents(&root);
    fs::remove_dir_all(&root).unwrap();
    pipeline(&root);
    assert_eq!(first, tree_contents(&root));
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");

    fs::write(&cfg, "synth_classes = 1\n").unwrap();
    let out = run(&["synth", "--config", s(&cfg), "--out", s(&tmp.path().join("d"))]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));

    fs::write(&cfg, "learning_rate = 3\n").unwrap();
    let out = run(&["synth", "--config", s(&cfg), "--out", s(&tmp.path().join("d"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    let bogus = tmp.path().join("model.ckpt");
    fs::write(&bogus, b"E2EVSR0 not a checkpoint").unwrap();
    let out = run(&["eval", "--dataset", s(tmp.path()), "--out", s(tmp.path()), "--model", s(&bogus)]);
    assert!(!out.status.success());
}

#[test]
fn mismatched_encoder_is_rejected_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("tiny.conf");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let data = root.join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    ok(&["pretrain", "--config", s(&cfg), "--dataset", s(&data), "--out", s(root), "--stream", "raw"]);
    let wider = root.join("wider.conf");
    fs::write(&wider, TINY_CONFIG.replace("encoder_hidden = 8", "encoder_hidden = 9")).unwrap();
    ok(&["pretrain", "--config", s(&wider), "--dataset", s(&data), "--out", s(&root.join("w")), "--stream", "diff"]);
    let out = run(&[
        "train",
        "--config",
        s(&cfg),
        "--dataset",
        s(&data),
        "--out",
        s(&root.join("m")),
        "--raw-encoder",
        s(&root.join("encoder_raw.ckpt")),
        "--diff-encoder",
        s(&root.join("w/encoder_diff.ckpt")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
    assert!(!root.join("m/history.csv").exists());
}
