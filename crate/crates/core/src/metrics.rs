//! Per-label AUROC and evaluation reports.

use std::fmt::Write as _;

use serde_json::json;

use crate::cross_attention::CanModel;
use crate::data::{Dataset, Window};
use crate::error::{CanError, Result};

/// Area under the ROC curve via the Mann–Whitney rank statistic, with ties
/// scored as one half. `None` when either class is empty.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(CanError::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&y| y != 0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks are (start + end + 1) / 2 for a tie run occupying [start, end)
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let run_pos = order[start..end].iter().filter(|&&i| labels[i] != 0).count();
        pos_rank_sum += midrank * run_pos as f64;
        start = end;
    }
    let p = positives as f64;
    let u = pos_rank_sum - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * negatives as f64)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label_names: Vec<String>,
    /// `None` marks a label without both classes on the evaluated split.
    pub per_label_auroc: Vec<Option<f64>>,
    /// Unweighted mean over the defined labels; `None` if none are defined.
    pub mean_auroc: Option<f64>,
    /// `(positives, negatives)` per label.
    pub counts: Vec<(usize, usize)>,
}

impl EvalReport {
    pub fn from_scores(
        label_names: &[String],
        scores: &[Vec<f64>],
        labels: &[Vec<u8>],
    ) -> Result<Self> {
        if scores.len() != label_names.len() || labels.len() != label_names.len() {
            return Err(CanError::shape("one score and label column is needed per label"));
        }
        let per_label = scores
            .iter()
            .zip(labels)
            .map(|(s, y)| auroc(s, y))
            .collect::<Result<Vec<_>>>()?;
        let defined: Vec<f64> = per_label.iter().flatten().copied().collect();
        let mean_auroc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let counts = labels
            .iter()
            .map(|y| {
                let p = y.iter().filter(|&&v| v != 0).count();
                (p, y.len() - p)
            })
            .collect();
        Ok(EvalReport {
            label_names: label_names.to_vec(),
            per_label_auroc: per_label,
            mean_auroc,
            counts,
        })
    }

    pub fn undefined_labels(&self) -> Vec<&str> {
        self.label_names
            .iter()
            .zip(&self.per_label_auroc)
            .filter(|(_, a)| a.is_none())
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "labels": self.label_names,
            "auroc": self.per_label_auroc,
            "mean": self.mean_auroc,
            "undefined": self.undefined_labels(),
            "positives": self.counts.iter().map(|c| c.0).collect::<Vec<_>>(),
            "negatives": self.counts.iter().map(|c| c.1).collect::<Vec<_>>(),
        })
    }

    /// Plain-text table: one row per label, then the average.
    pub fn to_table(&self, column: &str) -> String {
        let width = self
            .label_names
            .iter()
            .map(String::len)
            .chain([7])
            .max()
            .unwrap_or(7);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$} | {column:>10}", "Label");
        let _ = writeln!(out, "{}", "-".repeat(width + 13));
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |a| format!("{a:.3}"));
        for (name, a) in self.label_names.iter().zip(&self.per_label_auroc) {
            let _ = writeln!(out, "{name:<width$} | {:>10}", cell(*a));
        }
        let _ = writeln!(out, "{}", "-".repeat(width + 13));
        let _ = writeln!(out, "{:<width$} | {:>10}", "Average", cell(self.mean_auroc));
        out
    }
}

const EVAL_BATCH: usize = 64;

/// Eval-mode scores of every sample, one column per label. Images larger
/// than the model input are centre-cropped.
pub fn predict_dataset(model: &CanModel, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    let l = model.labels();
    if dataset.labels() != l {
        return Err(CanError::shape(format!(
            "dataset has {} labels, model predicts {l}",
            dataset.labels()
        )));
    }
    let mut columns = vec![Vec::with_capacity(dataset.len()); l];
    let Some(hw) = dataset.image_hw() else {
        return Ok(columns);
    };
    let size = model.config.input_hw[0];
    if hw.0 < size || hw.1 < size {
        return Err(CanError::shape(format!(
            "{hw:?} images are smaller than the {size}x{size} model input"
        )));
    }
    let window = Window::center(hw, size);
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let images = dataset.image_batch(chunk, &vec![window; chunk.len()])?;
        let probs = model.predict(&images)?;
        for row in probs.data().chunks(l) {
            for (col, &p) in columns.iter_mut().zip(row) {
                col.push(p);
            }
        }
    }
    Ok(columns)
}

pub fn label_columns(dataset: &Dataset) -> Vec<Vec<u8>> {
    (0..dataset.labels())
        .map(|l| dataset.samples().iter().map(|s| s.labels[l]).collect())
        .collect()
}

pub fn evaluate(model: &CanModel, dataset: &Dataset) -> Result<EvalReport> {
    let scores = predict_dataset(model, dataset)?;
    EvalReport::from_scores(dataset.label_names(), &scores, &label_columns(dataset))
}
