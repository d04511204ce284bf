//! The pipeline stages. Each reads its inputs from and writes its outputs to
//! one run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use stormstack::features::{balance, class_counts, featurize, split, FeatureSequence};
use stormstack::io::{
    format_real, generate_synthetic, load_checkpoint, load_events, load_sequences, load_volumes, save_checkpoint,
    save_events, save_sequences, save_volumes,
};
use stormstack::metrics::{evaluate, MetricsReport, MetricsRow};
use stormstack::model::{Architecture, KnnClassifier};
use stormstack::train::train;
use stormstack::{Error, Result};

use crate::config::{Baseline, RunConfig};

pub const EVENTS_FILE: &str = "events.csv";
pub const VOLUMES_FILE: &str = "volumes.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const TEST_FILE: &str = "test.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

const MAIN: Architecture = Architecture::ConvBiLstmAttention;

pub fn checkpoint_path(out: &Path, architecture: Architecture) -> PathBuf {
    out.join(format!("{}.ckpt", architecture.key()))
}

pub fn eval_path(out: &Path, key: &str) -> PathBuf {
    out.join(format!("eval_{key}.csv"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes raw events and volumes. Returns a summary line.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let data = generate_synthetic(&cfg.synthetic)?;
    save_events(&out.join(EVENTS_FILE), &data.events, &data.aux_channels)?;
    let pairs = data
        .events
        .iter()
        .zip(&data.volumes)
        .flat_map(|(e, vols)| vols.iter().map(move |v| (e.event_id.as_str(), v)));
    save_volumes(&out.join(VOLUMES_FILE), pairs)?;
    Ok(format!("generated {} events", data.events.len()))
}

/// Raw files to smoothed, balanced and split sequence files.
pub fn featurize_run(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (events, aux) = load_events(&out.join(EVENTS_FILE))?;
    let mut by_event = load_volumes(&out.join(VOLUMES_FILE))?;
    let mut volumes = Vec::with_capacity(events.len());
    for e in &events {
        let v = by_event
            .shift_remove(&e.event_id)
            .ok_or_else(|| Error::Validation(format!("event {} has no volumes", e.event_id)))?;
        volumes.push(v);
    }
    if let Some(id) = by_event.keys().next() {
        return Err(Error::Validation(format!("volumes reference unknown event {id}")));
    }
    let samples = featurize(&events, &volumes, cfg.threshold, &aux, cfg.kalman_q, cfg.kalman_r)?;
    let balanced = balance(&samples, cfg.seed)?;
    let parts = split(&balanced, cfg.split, cfg.seed)?;
    save_sequences(&out.join(TRAIN_FILE), &parts.train)?;
    save_sequences(&out.join(VALIDATION_FILE), &parts.validation)?;
    save_sequences(&out.join(TEST_FILE), &parts.test)?;
    Ok(format!(
        "featurized {} events; balanced to {} per class; split {}/{}/{}",
        samples.len(),
        class_counts(&balanced)[0],
        parts.train.len(),
        parts.validation.len(),
        parts.test.len()
    ))
}

fn networks(cfg: &RunConfig) -> impl Iterator<Item = Architecture> + '_ {
    cfg.baselines
        .iter()
        .filter_map(|b| match b {
            Baseline::Net(a) => Some(*a),
            Baseline::Knn => None,
        })
        .chain([MAIN])
}

/// Trains the main network and every requested network baseline.
pub fn train_run(cfg: &RunConfig, out: &Path) -> Result<String> {
    let train_set = load_sequences(&out.join(TRAIN_FILE))?;
    let val_set = load_sequences(&out.join(VALIDATION_FILE))?;
    let mut summary = Vec::new();
    for arch in networks(cfg) {
        let (model, log) = train(&train_set, &val_set, &cfg.model_config(arch), &cfg.train)?;
        save_checkpoint(&checkpoint_path(out, arch), &model)?;
        write(&out.join(format!("{}_epochs.csv", arch.key())), &log.to_csv())?;
        let best = log
            .best_epoch
            .map_or("none".to_string(), |e| e.to_string());
        summary.push(format!("{}: {} epochs, best {best}", arch.key(), log.epochs.len()));
    }
    Ok(summary.join("; "))
}

fn load_split(out: &Path, name: &str) -> Result<Vec<FeatureSequence>> {
    let set = load_sequences(&out.join(name))?;
    if set.is_empty() {
        return Err(Error::Validation(format!("{} holds no samples", out.join(name).display())));
    }
    Ok(set)
}

/// Evaluates requested baselines and the main model on the test split.
pub fn evaluate_run(cfg: &RunConfig, out: &Path) -> Result<MetricsReport> {
    let main = load_checkpoint(&checkpoint_path(out, MAIN))?;
    let test = load_split(out, TEST_FILE)?;
    let mut report = MetricsReport::default();
    let mut push = |key: &str, row: MetricsRow| -> Result<()> {
        write(&eval_path(out, key), &MetricsReport { rows: vec![row.clone()] }.to_csv())?;
        report.rows.push(row);
        Ok(())
    };
    for b in &cfg.baselines {
        let row = match b {
            Baseline::Knn => {
                let knn = KnnClassifier::fit(&load_split(out, TRAIN_FILE)?, cfg.knn_k)?;
                evaluate(b.display_name(), &knn, &test, cfg.positive_class)?
            }
            Baseline::Net(a) => {
                let net = load_checkpoint(&checkpoint_path(out, *a))?;
                evaluate(b.display_name(), &net, &test, cfg.positive_class)?
            }
        };
        push(b.key(), row)?;
    }
    push(MAIN.key(), evaluate(MAIN.display_name(), &main, &test, cfg.positive_class)?)?;
    write(&out.join("metrics.txt"), &report.render_table())?;
    write(&out.join("metrics.csv"), &report.to_csv())?;
    Ok(report)
}

/// Per-sample class probabilities of the main model.
pub fn predict_run(out: &Path, input: Option<&Path>) -> Result<String> {
    let default_input = out.join(TEST_FILE);
    let input = input.unwrap_or(&default_input);
    let model = load_checkpoint(&checkpoint_path(out, MAIN))?;
    let samples = load_sequences(input)?;
    let mut text = String::from("sample_id,label,p_tornado,p_hail,p_wind,predicted\n");
    for s in &samples {
        let p = model.probabilities(s)?;
        let predicted = stormstack::model::predict_class(&p);
        writeln!(
            text,
            "{},{},{},{},{},{}",
            s.sample_id,
            s.label.index(),
            format_real(p[0]),
            format_real(p[1]),
            format_real(p[2]),
            predicted.index()
        )
        .unwrap();
    }
    write(&out.join(PREDICTIONS_FILE), &text)?;
    Ok(format!("predicted {} samples from {}", samples.len(), input.display()))
}

/// Merges saved evaluations into one table, baselines first, main model last.
pub fn report_run(out: &Path) -> Result<MetricsReport> {
    let keys = Baseline::ALL.iter().map(|b| b.key()).chain([MAIN.key()]);
    let mut report = MetricsReport::default();
    for key in keys {
        let path = eval_path(out, key);
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        report.rows.extend(MetricsReport::from_csv(&text, &path.display().to_string())?.rows);
    }
    if report.rows.is_empty() {
        return Err(Error::Validation(format!("no eval_*.csv files in {}", out.display())));
    }
    write(&out.join("report.txt"), &report.render_table())?;
    write(&out.join("report.csv"), &report.to_csv())?;
    Ok(report)
}
