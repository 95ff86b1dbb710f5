use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cross_attention::{CanModel, FusionMode};
use crate::data::Dataset;
use crate::error::{CanError, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::train::config::{LossKind, RunConfig};
use crate::train::trainer::train;

/// One row of the ablation grid: the architecture and objective switches
/// applied on top of a base run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub dual: bool,
    #[serde(default)]
    pub fusion: FusionMode,
    #[serde(default)]
    pub concat_all: bool,
    pub loss: LossKind,
    /// Whether the attention loss is active (with the base config's α).
    #[serde(default)]
    pub attention: bool,
}

impl Variant {
    fn new(name: &str, dual: bool, fusion: FusionMode, concat_all: bool, loss: LossKind, attention: bool) -> Self {
        Variant {
            name: name.to_string(),
            dual,
            fusion,
            concat_all,
            loss,
            attention,
        }
    }

    pub fn single_bce() -> Self {
        Variant::new("single+BCE", false, FusionMode::Hadamard, false, LossKind::Bce, false)
    }

    pub fn single_bal() -> Self {
        Variant::new("single+L_bal", false, FusionMode::Hadamard, false, LossKind::Balance, false)
    }

    pub fn dual_hadamard() -> Self {
        Variant::new("dual(had)+L_bal", true, FusionMode::Hadamard, false, LossKind::Balance, false)
    }

    pub fn dual_hadamard_concat() -> Self {
        Variant::new("dual(had+all_cat)+L_bal", true, FusionMode::Hadamard, true, LossKind::Balance, false)
    }

    pub fn dual_full(fusion: FusionMode) -> Self {
        let name = match fusion {
            FusionMode::Hadamard => "CAN(had+all_cat)+L_bal+L_att".to_string(),
            other => format!("dual({other}+all_cat)+L_bal+L_att"),
        };
        Variant {
            name,
            ..Variant::new("", true, fusion, true, LossKind::Balance, true)
        }
    }

    pub fn full_can() -> Self {
        Variant::dual_full(FusionMode::Hadamard)
    }

    /// Every row: the baselines, the two fusion ablations, the full model.
    pub fn default_grid() -> Vec<Variant> {
        vec![
            Variant::single_bce(),
            Variant::single_bal(),
            Variant::dual_hadamard(),
            Variant::dual_hadamard_concat(),
            Variant::dual_full(FusionMode::Add),
            Variant::dual_full(FusionMode::Max),
            Variant::full_can(),
        ]
    }

    /// `base` with this variant's switches applied and `seed` as run seed.
    pub fn apply(&self, base: &RunConfig, seed: u64) -> RunConfig {
        let mut cfg = base.clone();
        if !self.dual {
            cfg.backbone_b = None;
        } else if cfg.backbone_b.is_none() {
            cfg.backbone_b = Some(cfg.backbone_a.clone());
        }
        cfg.fusion = self.fusion;
        cfg.concat_all = self.concat_all;
        cfg.loss.kind = self.loss;
        if !self.attention {
            cfg.loss.alpha = 0.0;
        }
        cfg.seed = seed;
        cfg.init_seeds = None;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub base: RunConfig,
    #[serde(default = "Variant::default_grid")]
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.seeds.is_empty() {
            return Err(CanError::config("an ablation needs at least one variant and one seed"));
        }
        for v in &self.variants {
            for &s in &self.seeds {
                v.apply(&self.base, s).validate()?;
            }
        }
        Ok(())
    }

    /// `(variant index, seed)` pairs in report order.
    pub fn runs(&self) -> Vec<(usize, u64)> {
        (0..self.variants.len())
            .flat_map(|v| self.seeds.iter().map(move |&s| (v, s)))
            .collect()
    }
}

/// Results of one variant across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub num_parameters: usize,
    /// Test reports in seed order.
    pub reports: Vec<(u64, EvalReport)>,
}

/// Mean and standard error of the mean; the error is zero for one value.
pub fn mean_and_sem(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

impl AblationRow {
    /// Per-seed values of one label's AUROC (`None` = the mean AUROC),
    /// skipping seeds where it is undefined.
    pub fn values(&self, label: Option<usize>) -> Vec<f64> {
        self.reports
            .iter()
            .filter_map(|(_, r)| match label {
                Some(l) => r.per_label_auroc[l],
                None => r.mean_auroc,
            })
            .collect()
    }

    pub fn summary(&self, label: Option<usize>) -> Option<(f64, f64)> {
        mean_and_sem(&self.values(label))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub label_names: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant.name == name)
    }

    /// Seed-averaged AUROC per label and on average, one row per variant.
    pub fn to_table(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.variant.name.len()).chain([7]).max().unwrap_or(7);
        let col_w = self.label_names.iter().map(String::len).chain([13]).max().unwrap_or(13);
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$} | {:>8}", "Variant", "Params");
        for n in &self.label_names {
            let _ = write!(out, " | {n:>col_w$}");
        }
        let _ = writeln!(out, " | {:>col_w$}", "Average");
        let _ = writeln!(out, "{}", "-".repeat(name_w + 11 + (col_w + 3) * (self.label_names.len() + 1)));
        let cell = |s: Option<(f64, f64)>| s.map_or_else(|| "n/a".to_string(), |(m, e)| format!("{m:.3}±{e:.3}"));
        for row in &self.rows {
            let _ = write!(out, "{:<name_w$} | {:>8}", row.variant.name, row.num_parameters);
            for l in 0..self.label_names.len() {
                let _ = write!(out, " | {:>col_w$}", cell(row.summary(Some(l))));
            }
            let _ = writeln!(out, " | {:>col_w$}", cell(row.summary(None)));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "labels": self.label_names,
            "rows": self.rows.iter().map(|r| serde_json::json!({
                "variant": r.variant,
                "parameters": r.num_parameters,
                "runs": r.reports.iter().map(|(s, rep)| serde_json::json!({
                    "seed": s,
                    "report": rep.to_json(),
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Train every variant for every seed and evaluate the selected model on
/// `test`. `on_run` is told about each finished run.
pub fn ablate(
    grid: &AblationConfig,
    train_set: &Dataset,
    val: &Dataset,
    test: &Dataset,
    mut on_run: impl FnMut(&Variant, u64, &EvalReport),
) -> Result<AblationReport> {
    grid.validate()?;
    let mut rows: Vec<AblationRow> = grid
        .variants
        .iter()
        .map(|v| {
            let cfg = v.apply(&grid.base, grid.seeds[0]);
            let params = CanModel::init(cfg.model_config(train_set.labels()), cfg.seeds())?.num_parameters();
            Ok(AblationRow {
                variant: v.clone(),
                num_parameters: params,
                reports: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    for (v, seed) in grid.runs() {
        let cfg = grid.variants[v].apply(&grid.base, seed);
        let ckpt = train(&cfg, train_set, val)?;
        let report = evaluate(ckpt.selected_model(), test)?;
        on_run(&grid.variants[v], seed, &report);
        rows[v].reports.push((seed, report));
    }
    Ok(AblationReport {
        label_names: test.label_names().to_vec(),
        rows,
    })
}
