use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = r#"
seed = 7
output = "out"

[data]
dir = "data"

[synth]
n_posts = 1200
n_users = 60
n_locations = 20
visual_dim = 16
text_dim = 16

[models.gbdt]
n_trees = 40

[models.mlp]
epochs = 4
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperfusion"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.toml"), config).unwrap();
    tmp
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_creates_missing_directories_and_a_manifest() {
    let tmp = setup(&BASE.replace("dir = \"data\"", "dir = \"nested/deeper/data\""));
    ok(tmp.path(), &["--config", "run.toml", "synth"]);
    let data = tmp.path().join("nested/deeper/data");
    for f in ["posts.jsonl", "visual_clip.pfe", "text_clip.pfe", "tags_glove.pfe", "truth.json"] {
        assert!(data.join(f).exists(), "{f} missing");
    }
    let manifest = json(&data.join("manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["finished_at"].as_u64().unwrap() >= manifest["started_at"].as_u64().unwrap());
}

#[test]
fn invalid_labeled_fraction_is_a_config_error() {
    let tmp = setup(&BASE.replace("[synth]", "[synth]\nlabeled_fraction = 1.5"));
    let out = run(tmp.path(), &["--config", "run.toml", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("synth.labeled_fraction"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn unknown_config_key_and_unknown_ablation_are_config_errors() {
    let tmp = setup(&format!("{BASE}\n[eval]\nablations = [\"drop-everything\"]\n"));
    let out = run(tmp.path(), &["--config", "run.toml", "ablate"]);
    assert_eq!(out.status.code(), Some(2));

    let tmp = setup(&BASE.replace("[synth]", "[synth]\nn_post = 3"));
    let out = run(tmp.path(), &["--config", "run.toml", "synth"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_is_a_data_error() {
    let tmp = setup(BASE);
    let out = run(tmp.path(), &["--config", "run.toml", "train"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("posts.jsonl"));
}

#[test]
fn train_predict_evaluate_importance_round_trip() {
    let tmp = setup(&format!("{BASE}\n[pseudo]\nmax_iterations = 1\n"));
    let dir = tmp.path();
    ok(dir, &["--config", "run.toml", "synth"]);

    let stdout = ok(dir, &["--config", "run.toml", "train"]);
    let last = stdout.trim_end().lines().last().unwrap();
    let (src, mae) = last
        .strip_prefix("SRC=")
        .and_then(|s| s.split_once(" MAE="))
        .unwrap_or_else(|| panic!("unexpected final line {last:?}"));
    assert_eq!(src.split_once('.').unwrap().1.len(), 4);
    assert_eq!(mae.split_once('.').unwrap().1.len(), 4);
    let (src, mae): (f64, f64) = (src.parse().unwrap(), mae.parse().unwrap());
    assert!(src > 0.3 && mae > 0.0, "{last}");

    let manifest = json(&dir.join("out/manifest.json"));
    assert_eq!(manifest["metrics"]["pseudo"]["status"], "skipped");
    assert!((manifest["metrics"]["holdout"]["src"].as_f64().unwrap() - src).abs() < 5e-5);
    assert!(manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|a| a.as_str().unwrap().ends_with("model.bin")));

    ok(dir, &["--config", "run.toml", "predict"]);
    let preds = std::fs::read_to_string(dir.join("out/predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("post_id,prediction"));
    let first = lines.next().unwrap();
    assert_eq!(first.split_once(',').unwrap().1.split_once('.').unwrap().1.len(), 6);
    assert_eq!(preds.lines().count(), 1201);

    // A predictions file equal to the labels scores perfectly.
    let mut perfect = String::from("post_id,prediction\n");
    for line in std::fs::read_to_string(dir.join("data/posts.jsonl")).unwrap().lines() {
        let post: Value = serde_json::from_str(line).unwrap();
        if let Some(label) = post["label"].as_f64() {
            perfect.push_str(&format!("{},{label}\n", post["post_id"].as_str().unwrap()));
        }
    }
    std::fs::write(dir.join("perfect.csv"), perfect).unwrap();
    ok(dir, &["--config", "run.toml", "--out", "eval", "evaluate", "--predictions", "perfect.csv"]);
    let metrics = json(&dir.join("eval/metrics.json"));
    assert_eq!(metrics["src"], 1.0);
    assert_eq!(metrics["mae"], 0.0);
    let hist = std::fs::read_to_string(dir.join("eval/histogram.csv")).unwrap();
    assert!(hist.starts_with("bin_left,bin_right,count_true,count_pred\n"), "{hist}");
    assert!(dir.join("eval/density.csv").exists());

    let model = dir.join("out/model.bin");
    ok(dir, &["--config", "run.toml", "--out", "eval2", "evaluate", "--model", model.to_str().unwrap()]);
    let held = json(&dir.join("eval2/metrics.json"));
    assert!((held["src"].as_f64().unwrap() - src).abs() < 5e-5);

    let stdout = ok(dir, &["--config", "run.toml", "importance"]);
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "rank,feature,importance");
    assert_eq!(rows.len(), 21);
    let truth = json(&dir.join("data/truth.json"));
    let planted: Vec<&str> = truth["planted"]
        .as_object()
        .unwrap()
        .values()
        .flat_map(|v| v.as_array().unwrap().iter().map(|s| s.as_str().unwrap()))
        .collect();
    let top: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert!(top.iter().any(|f| planted.contains(f)), "top features {top:?}");
}

#[test]
fn version_mismatch_names_both_versions() {
    let tmp = setup(BASE);
    let dir = tmp.path();
    ok(dir, &["--config", "run.toml", "synth"]);
    let mut bytes = b"HFEN".to_vec();
    bytes.extend(99u32.to_le_bytes());
    bytes.extend([0u8; 16]);
    std::fs::write(dir.join("old.bin"), bytes).unwrap();
    let out = run(dir, &["--config", "run.toml", "predict", "--model", "old.bin"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("99") && err.contains("version 1"), "{err}");
}

#[test]
fn zero_workers_is_rejected() {
    let tmp = setup(BASE);
    let out = run(tmp.path(), &["--config", "run.toml", "--workers", "0", "synth"]);
    assert_eq!(out.status.code(), Some(2));
}
