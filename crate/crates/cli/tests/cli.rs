//! Drives the `camo` binary on tiny synthetic corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

/// Small-scale settings shared by every invocation.
const TINY: &[&str] = &[
    "--size",
    "32",
    "--corpus.count",
    "16",
    "--corpus.size",
    "40",
    "--train.validation-size",
    "2",
    "--train.max-steps",
    "2",
    "--train.checkpoint-every",
    "1",
    "--train.batch-size",
    "2",
    "--detector.min-train-reals",
    "8",
    "--detector.epochs",
    "1",
    "--detector.gate",
    "0",
];

fn camo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camo"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .env_remove("CAMO_SEED")
        .args(TINY)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = camo(dir, args);
    assert!(
        out.status.success(),
        "camo {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Raw corpus under `raw/` and its prepared copy under
/// `out/data/run/`.
fn prepared() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth-corpus", "--dest", "raw"]);
    ok(dir.path(), &["prepare-data", "--manifest", "raw/manifest.json"]);
    dir
}

const MANIFEST: &[&str] = &["--manifest", "out/data/run/manifest.json"];

fn with_manifest<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().chain(MANIFEST).copied().collect()
}

/// Relative path to file contents for everything under `root`.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn count_files(dir: &Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn prepare_data_writes_images_masks_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth-corpus", "--dest", "raw", "--corpus.count", "10"]);
    ok(dir.path(), &["prepare-data", "--manifest", "raw/manifest.json", "--dest", "prep"]);
    let prep = dir.path().join("prep");
    assert_eq!(count_files(&prep.join("images"), "png"), 10);
    assert_eq!(count_files(&prep.join("masks"), "png"), 10);
    assert_eq!(count_files(&prep.join("landmarks"), "json"), 10);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(prep.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 10);
    assert!(prep.join("prepare-data.config.json").exists());
}

#[test]
fn prepare_data_is_idempotent() {
    let dir = prepared();
    let data = dir.path().join("out/data/run");
    let first = snapshot(&data);
    ok(dir.path(), &["prepare-data", "--manifest", "raw/manifest.json"]);
    assert_eq!(first, snapshot(&data));
}

#[test]
fn prepare_data_reports_a_corrupt_image() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth-corpus", "--dest", "raw", "--corpus.count", "10"]);
    let bad = dir.path().join("raw/images/face_00003.png");
    std::fs::write(&bad, b"not a png").unwrap();
    let out = camo(dir.path(), &["prepare-data", "--manifest", "raw/manifest.json"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("face_00003.png"), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("out/reports/run/prepare-data.json")).unwrap();
    assert!(report.contains("face_00003.png"));
    assert_eq!(count_files(&dir.path().join("out/data/run/images"), "png"), 9);
}

#[test]
fn identity_camouflage_is_byte_identical() {
    let dir = prepared();
    ok(dir.path(), &with_manifest(&["camouflage", "--identity"]));
    let outputs = dir.path().join("out/images/run/camgan");
    let mut compared = 0;
    for e in std::fs::read_dir(&outputs).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "png") {
            let input = dir.path().join("out/data/run/images").join(p.file_name().unwrap());
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&input).unwrap(), "{}", p.display());
            compared += 1;
        }
    }
    // 16 faces, every fourth in test, two held for validation.
    assert_eq!(compared, 2);
    let params = std::fs::read_to_string(outputs.join("params.jsonl")).unwrap();
    assert_eq!(params.lines().count(), 2);
}

#[test]
fn missing_artifacts_name_the_producing_command() {
    let dir = prepared();
    let out = camo(dir.path(), &with_manifest(&["train"]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("camo train-detector"), "{}", stderr(&out));

    let out = camo(dir.path(), &with_manifest(&["camouflage"]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("camo train"), "{}", stderr(&out));

    let out = camo(dir.path(), &["train-detector", "--manifest", "nowhere.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("prepare-data"), "{}", stderr(&out));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = camo(dir.path(), &["synth-corpus", "--train.lr", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = camo(dir.path(), &["synth-corpus", "--postprocess", "sharpen"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), "{\"train\": ").unwrap();
    let out = camo(dir.path(), &["synth-corpus", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = camo(dir.path(), &["train-detector"]);
    assert_eq!(out.status.code(), Some(2), "no manifest configured");
}

#[test]
fn seed_layering_is_persisted() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"seed": 1, "train": {"lambda": 0.5}}"#).unwrap();
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_camo"));
        cmd.current_dir(dir.path())
            .env("RUST_LOG", "error")
            .env_remove("CAMO_SEED")
            .args(["synth-corpus", "--config", "cfg.json", "--corpus.count", "4", "--dest", "c"])
            .args(extra);
        if let Some(s) = env {
            cmd.env("CAMO_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        let echo: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/synth-corpus.config.json")).unwrap())
                .unwrap();
        (echo["seed"].as_u64().unwrap(), echo["train"]["lambda"].as_f64().unwrap())
    };
    assert_eq!(run(None, &[]), (1, 0.5));
    assert_eq!(run(Some("7"), &[]), (7, 0.5));
    assert_eq!(run(Some("7"), &["--seed", "3", "--train.lambda", "2"]), (3, 2.0));
}

#[test]
fn untrained_detector_fails_the_training_gate() {
    let dir = prepared();
    ok(dir.path(), &with_manifest(&["train-detector"]));
    let out = camo(dir.path(), &with_manifest(&["train", "--train.detector-gate", "0.99"]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("gate"), "{}", stderr(&out));
    assert!(!dir.path().join("out/checkpoints/run/generator.ckpt").exists());
}

#[test]
fn tutorial_sequence_produces_reports() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &with_manifest(&["train-detector"]));
    ok(d, &with_manifest(&["train", "--train.detector-gate", "0"]));
    ok(d, &with_manifest(&["camouflage"]));
    let images = d.join("out/images/run/camgan");
    let first = snapshot(&images);
    ok(d, &with_manifest(&["camouflage"]));
    assert_eq!(first, snapshot(&images), "camouflage reruns are bitwise identical");

    ok(d, &with_manifest(&["baseline", "pgd"]));
    ok(d, &with_manifest(&["baseline", "handcrafted"]));
    ok(
        d,
        &["detector", "import", "out/checkpoints/run/detector.ckpt", "--name", "blind", "--no-gradients"],
    );
    ok(d, &with_manifest(&["evaluate"]));
    let metrics_path = d.join("out/reports/run/metrics.json");
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    // detectors × attacks × post-processes: 2 × {clean, camgan, pgd, handcrafted} × 4.
    assert_eq!(metrics["rows"].as_array().unwrap().len(), 2 * 4 * 4);
    assert_eq!(metrics["quality"].as_array().unwrap().len(), 4);
    assert_eq!(metrics["config"]["size"], 32);
    let verdicts = std::fs::read_to_string(d.join("out/reports/run/verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 2 * 4 * 4 * 2);

    let before = std::fs::read(&metrics_path).unwrap();
    ok(d, &with_manifest(&["evaluate"]));
    assert_eq!(before, std::fs::read(&metrics_path).unwrap());

    ok(d, &with_manifest(&["robustness"]));
    let robust: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/reports/run/robustness.json")).unwrap()).unwrap();
    assert_eq!(robust["rows"].as_array().unwrap().len(), 4);

    ok(d, &with_manifest(&["gradcam", "--limit", "1"]));
    assert_eq!(count_files(&d.join("out/images/run/gradcam"), "png"), 2);
    let out = camo(
        d,
        &with_manifest(&["gradcam", "--detector-checkpoint", "out/checkpoints/run/detectors/blind.ckpt"]),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("does not expose gradients"));

    for f in ["train.config.json", "train.jsonl"] {
        assert!(d.join("out/logs/run").join(f).exists(), "{f}");
    }
}
