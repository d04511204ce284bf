//! Confusion matrices, one-vs-rest precision/recall/F1/accuracy and the
//! comparison table built from them.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{EventClass, FeatureSequence};
use crate::io::format_real;
use crate::model::Predictor;
use crate::NUM_CLASSES;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    /// `(TP, FP, FN, TN)` for `positive` against the other classes.
    pub fn one_vs_rest(&self, positive: EventClass) -> (u64, u64, u64, u64) {
        let p = positive.index();
        let tp = self.counts[p][p];
        let fp: u64 = (0..NUM_CLASSES).filter(|&t| t != p).map(|t| self.counts[t][p]).sum();
        let fn_: u64 = (0..NUM_CLASSES).filter(|&c| c != p).map(|c| self.counts[p][c]).sum();
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }
}

pub fn confusion(preds: &[EventClass], truth: &[EventClass]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truth) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, F1 and accuracy from one-vs-rest counts; 0/0 is 0.
pub fn binary_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> BinaryMetrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BinaryMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
    }
}

pub fn metrics(cm: &ConfusionMatrix, positive: EventClass) -> BinaryMetrics {
    let (tp, fp, fn_, tn) = cm.one_vs_rest(positive);
    binary_metrics(tp, fp, fn_, tn)
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model: String,
    pub positive: EventClass,
    pub headline: BinaryMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Fraction of samples whose predicted class equals the true class.
    pub overall_accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsRow {
    pub fn from_confusion(model: impl Into<String>, cm: ConfusionMatrix, positive: EventClass) -> Self {
        let per_class: Vec<BinaryMetrics> = EventClass::ALL.iter().map(|&c| metrics(&cm, c)).collect();
        let avg = |f: fn(&BinaryMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
        Self {
            model: model.into(),
            positive,
            headline: metrics(&cm, positive),
            macro_precision: avg(|m| m.precision),
            macro_recall: avg(|m| m.recall),
            macro_f1: avg(|m| m.f1),
            overall_accuracy: ratio(cm.trace(), cm.total()),
            confusion: cm,
        }
    }
}

/// Predicts every test sample and summarizes the result for `positive`.
pub fn evaluate<P: Predictor + Sync + ?Sized>(
    name: &str,
    predictor: &P,
    test: &[FeatureSequence],
    positive: EventClass,
) -> Result<MetricsRow> {
    if test.is_empty() {
        return Err(Error::Usage("cannot evaluate on an empty test set".into()));
    }
    let preds = test
        .par_iter()
        .map(|s| predictor.predict_sample(s))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<EventClass> = test.iter().map(|s| s.label).collect();
    Ok(MetricsRow::from_confusion(name, confusion(&preds, &truth)?, positive))
}

pub const TABLE_COLUMNS: [&str; 4] = ["Precision", "Recall", "F1-Score", "Accuracy"];

const CSV_HEADER: &str = "model,positive_class,precision,recall,f1,accuracy,macro_precision,macro_recall,macro_f1,overall_accuracy,confusion";

/// A set of rows rendered as an aligned table or as comma-separated text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    /// Model name then the four headline metrics at 4 decimal places.
    pub fn render_table(&self) -> String {
        let name_width = self.rows.iter().map(|r| r.model.len()).chain([6]).max().unwrap_or(6);
        let mut out = String::new();
        let _ = write!(out, "{:<name_width$}", "Models");
        for c in TABLE_COLUMNS {
            let _ = write!(out, "  {c:>9}");
        }
        out.push('\n');
        for r in &self.rows {
            let m = r.headline;
            let _ = write!(out, "{:<name_width$}", r.model);
            for v in [m.precision, m.recall, m.f1, m.accuracy] {
                let _ = write!(out, "  {v:>9.4}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let m = r.headline;
            let cm = r
                .confusion
                .counts
                .iter()
                .flatten()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            let reals = [
                m.precision,
                m.recall,
                m.f1,
                m.accuracy,
                r.macro_precision,
                r.macro_recall,
                r.macro_f1,
                r.overall_accuracy,
            ]
            .map(format_real)
            .join(",");
            let _ = writeln!(out, "{},{},{reals},{cm}", r.model, r.positive);
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. Rows are rebuilt from the
    /// stored confusion matrix, so the metrics are recomputed exactly.
    pub fn from_csv(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line: line + 1,
            msg,
        };
        match lines.next() {
            Some((_, h)) if h == CSV_HEADER => {}
            _ => return Err(parse_err(0, "unexpected metrics header".into())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(parse_err(i, format!("expected 11 fields, got {}", fields.len())));
            }
            let positive = fields[1]
                .parse::<usize>()
                .map_err(|e| parse_err(i, e.to_string()))
                .and_then(|p| EventClass::from_index(p).map_err(|e| parse_err(i, e.to_string())))?;
            let counts: Vec<u64> = fields[10]
                .split(' ')
                .map(|c| c.parse::<u64>().map_err(|e| parse_err(i, e.to_string())))
                .collect::<Result<_>>()?;
            if counts.len() != NUM_CLASSES * NUM_CLASSES {
                return Err(parse_err(i, "confusion matrix needs 9 counts".into()));
            }
            let mut cm = ConfusionMatrix::default();
            for (k, c) in counts.into_iter().enumerate() {
                cm.counts[k / NUM_CLASSES][k % NUM_CLASSES] = c;
            }
            rows.push(MetricsRow::from_confusion(fields[0], cm, positive));
        }
        Ok(Self { rows })
    }
}
