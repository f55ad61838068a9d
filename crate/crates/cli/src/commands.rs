use std::collections::HashMap;
use std::path::{Path, PathBuf};

use hyperfusion::eval::{
    ablation_csv, ablation_run, density, density_csv, histogram, histogram_csv, modal_bin_center,
    permutation_importance, Metrics, Toggle, DENSITY_POINTS,
};
use hyperfusion::ensemble::EnsembleModel;
use hyperfusion::experiment::{ensemble_seed, holdout_split, run_experiment};
use hyperfusion::features::FeaturePipeline;
use hyperfusion::synthgen::{generate, TRUTH_FILE};
use hyperfusion::{Dataset, Error, Result, RngSeed, RunConfig};
use serde_json::json;

use crate::manifest::{write_atomic, RunManifest};

pub const MODEL_FILE: &str = "model.bin";
pub const PIPELINE_FILE: &str = "pipeline.bin";
pub const FEATURES_FILE: &str = "features.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const HOLDOUT_FILE: &str = "holdout_predictions.csv";
pub const PSEUDO_FILE: &str = "pseudo_report.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const DENSITY_FILE: &str = "density.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const IMPORTANCE_FILE: &str = "importance.csv";

const FEATURIZE_TAG: u64 = 0x6665_6174;
const IMPORTANCE_TAG: u64 = 0x696d_706f;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_output(manifest: &mut RunManifest, path: PathBuf, bytes: &[u8]) -> Result<()> {
    write_atomic(&path, bytes)?;
    manifest.artifact(&path);
    Ok(())
}

fn start(cfg: &RunConfig, command: &str) -> Result<RunManifest> {
    cfg.validate()?;
    Ok(RunManifest::start(command, cfg.content_hash(), cfg.seed))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let ds = Dataset::load(&cfg.data.posts_path(), &cfg.data.table_paths(), cfg.data.join)?;
    log::info!("loaded {} posts ({} dropped by the join)", ds.len(), ds.dropped);
    Ok(ds)
}

fn load_model(cfg: &RunConfig, path: Option<&Path>) -> Result<EnsembleModel> {
    let path = path.map_or_else(|| cfg.output.join(MODEL_FILE), Path::to_path_buf);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    EnsembleModel::from_bytes(&bytes)
}

fn prediction_csv(ds: &Dataset, rows: &[usize], preds: &[f64]) -> String {
    let mut s = String::from("post_id,prediction\n");
    for (&r, p) in rows.iter().zip(preds) {
        s.push_str(&format!("{},{:.6}\n", ds.posts[r].post_id, p));
    }
    s
}

fn metrics_json(m: &Metrics) -> serde_json::Value {
    json!({ "src": m.src, "mae": m.mae, "n": m.n })
}

pub fn synth(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let mut manifest = start(cfg, "synth")?;
    let dir = out.map_or_else(|| cfg.data.dir.clone(), Path::to_path_buf);
    let data = generate(&cfg.synth, RngSeed(cfg.seed))?;
    data.write_to(&dir)?;
    manifest.artifact(&dir.join(&cfg.data.posts));
    for table in &cfg.data.tables {
        manifest.artifact(&dir.join(table));
    }
    manifest.artifact(&dir.join(TRUTH_FILE));
    manifest.metric("oracle_src_bound", json!(data.truth.oracle_src_bound));
    manifest.metric("posts", json!(data.posts.len()));
    manifest.finish(&dir)?;
    println!("wrote {} posts to {}", data.posts.len(), dir.display());
    Ok(())
}

pub fn featurize(cfg: &RunConfig) -> Result<()> {
    let mut manifest = start(cfg, "featurize")?;
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.output)?;
    let (train, holdout) = holdout_split(&ds, cfg.eval.holdout_fraction, RngSeed(cfg.seed));
    let held: std::collections::HashSet<usize> = holdout.iter().copied().collect();
    let fit_rows: Vec<usize> = (0..ds.len()).filter(|r| !held.contains(r)).collect();
    let pipeline = FeaturePipeline::fit(&ds, &fit_rows, &cfg.features, RngSeed(cfg.seed).derive(&[FEATURIZE_TAG]))?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let x = pipeline.transform(&ds, &all)?;
    let mut csv = String::from("post_id");
    for name in x.col_names() {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for r in 0..x.rows() {
        csv.push_str(&x.ids()[r]);
        for v in x.row(r) {
            csv.push_str(&format!(",{v:.6}"));
        }
        csv.push('\n');
    }
    write_output(&mut manifest, cfg.output.join(FEATURES_FILE), csv.as_bytes())?;
    write_output(&mut manifest, cfg.output.join(PIPELINE_FILE), &pipeline.to_bytes())?;
    manifest.metric("features", json!({ "rows": x.rows(), "cols": x.cols(), "fit_rows": fit_rows.len(), "labeled_train": train.len() }));
    manifest.finish(&cfg.output)?;
    println!("{} rows x {} features", x.rows(), x.cols());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let mut manifest = start(cfg, "train")?;
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.output)?;
    let result = run_experiment(&ds, cfg)?;
    write_output(&mut manifest, cfg.output.join(MODEL_FILE), &result.model.to_bytes())?;
    write_output(
        &mut manifest,
        cfg.output.join(HOLDOUT_FILE),
        prediction_csv(&ds, &result.holdout_rows, &result.holdout_predictions).as_bytes(),
    )?;
    write_output(&mut manifest, cfg.output.join(PSEUDO_FILE), result.pseudo.to_jsonl().as_bytes())?;

    let folds: Vec<_> = result
        .model
        .fold_reports()
        .iter()
        .map(|f| serde_json::to_value(f).expect("fold report serializes"))
        .collect();
    manifest.metric("ensemble", json!({ "oof": metrics_json(&result.model.summary.oof), "folds": folds }));
    let pseudo = if cfg.pseudo.active() {
        json!({ "status": "ran", "iterations": result.pseudo.iterations })
    } else {
        json!({ "status": "skipped" })
    };
    manifest.metric("pseudo", pseudo);
    let final_metrics = result.holdout.unwrap_or(result.model.summary.oof);
    manifest.metric(
        if result.holdout.is_some() { "holdout" } else { "oof" },
        metrics_json(&final_metrics),
    );
    manifest.finish(&cfg.output)?;
    if result.holdout.is_none() {
        log::warn!("no held-out posts; reporting out-of-fold metrics");
    }
    println!("SRC={:.4} MAE={:.4}", final_metrics.src, final_metrics.mae);
    Ok(())
}

pub fn predict(cfg: &RunConfig, model: Option<&Path>) -> Result<()> {
    let mut manifest = start(cfg, "predict")?;
    let model = load_model(cfg, model)?;
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.output)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let preds = model.predict(&ds, &rows)?;
    write_output(&mut manifest, cfg.output.join(PREDICTIONS_FILE), prediction_csv(&ds, &rows, &preds).as_bytes())?;
    manifest.metric("predictions", json!(rows.len()));
    manifest.finish(&cfg.output)?;
    println!("predicted {} posts", rows.len());
    Ok(())
}

/// Parse a `post_id,prediction` file into a map.
fn read_predictions(path: &Path) -> Result<HashMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let (id, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `post_id,prediction`".into()))?;
        let v: f64 = v.trim().parse().map_err(|e| parse_err(format!("bad prediction: {e}")))?;
        if out.insert(id.to_string(), v).is_some() {
            return Err(Error::Duplicate(id.to_string()));
        }
    }
    Ok(out)
}

pub fn evaluate(cfg: &RunConfig, model: Option<&Path>, predictions: Option<&Path>) -> Result<()> {
    let mut manifest = start(cfg, "evaluate")?;
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.output)?;
    let (y, yhat) = match predictions {
        Some(path) => {
            let preds = read_predictions(path)?;
            ds.posts
                .iter()
                .filter_map(|p| Some((p.label?, *preds.get(&p.post_id)?)))
                .unzip::<_, _, Vec<f64>, Vec<f64>>()
        }
        None => {
            let model = load_model(cfg, model)?;
            let (_, holdout) = holdout_split(&ds, cfg.eval.holdout_fraction, RngSeed(cfg.seed));
            let y: Vec<f64> = holdout.iter().map(|&r| ds.posts[r].label.expect("labeled")).collect();
            (y, model.predict(&ds, &holdout)?)
        }
    };
    let metrics = Metrics::compute(&y, &yhat)?;
    let hist = histogram(&y, &yhat, cfg.eval.bins, None)?;
    let dens = density(&y, &yhat, DENSITY_POINTS, None)?;
    let doc = json!({
        "src": metrics.src,
        "mae": metrics.mae,
        "n": metrics.n,
        "modal_bin_center": modal_bin_center(&hist),
    });
    let text = serde_json::to_string_pretty(&doc).expect("metrics serialize") + "\n";
    write_output(&mut manifest, cfg.output.join(METRICS_FILE), text.as_bytes())?;
    write_output(&mut manifest, cfg.output.join(HISTOGRAM_FILE), histogram_csv(&hist).as_bytes())?;
    write_output(&mut manifest, cfg.output.join(DENSITY_FILE), density_csv(&dens).as_bytes())?;
    manifest.metric("evaluate", metrics_json(&metrics));
    manifest.finish(&cfg.output)?;
    println!("SRC={:.4} MAE={:.4}", metrics.src, metrics.mae);
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let mut manifest = start(cfg, "ablate")?;
    let toggles: Vec<Toggle> = cfg.eval.ablations.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.output)?;
    let rows = ablation_run(&ds, cfg, &toggles)?;
    let csv = ablation_csv(&rows);
    write_output(&mut manifest, cfg.output.join(ABLATION_FILE), csv.as_bytes())?;
    manifest.metric("ablation", serde_json::to_value(&rows).expect("rows serialize"));
    manifest.finish(&cfg.output)?;
    print!("{csv}");
    Ok(())
}

pub fn importance(cfg: &RunConfig, model: Option<&Path>) -> Result<()> {
    let mut manifest = start(cfg, "importance")?;
    let model = load_model(cfg, model)?;
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.output)?;
    let (train, holdout) = holdout_split(&ds, cfg.eval.holdout_fraction, RngSeed(cfg.seed));
    let rows = if holdout.len() >= 2 { holdout } else { train };
    let y: Vec<f64> = rows.iter().map(|&r| ds.posts[r].label.expect("labeled")).collect();
    let seed = ensemble_seed(cfg).derive(&[IMPORTANCE_TAG]);
    let report = permutation_importance(&model, &ds, &rows, &y, cfg.eval.importance_repeats, seed)?;
    let csv = report.to_csv(cfg.eval.top_k);
    write_output(&mut manifest, cfg.output.join(IMPORTANCE_FILE), csv.as_bytes())?;
    manifest.metric("importance", json!({ "baseline_mae": report.baseline_mae, "blocks": report.blocks }));
    manifest.finish(&cfg.output)?;
    print!("{csv}");
    Ok(())
}
