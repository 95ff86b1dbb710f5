//! The imbalance benchmark behind criteria 5 and 6. Everything here was
//! fixed before the first full run; see the crate README for the numbers.

use std::time::Instant;

use can::data::{generate, Dataset, GenConfig};
use can::localization::localize_dataset;
use can::metrics::evaluate;
use can::train::ablation::{mean_and_sem, AblationReport, AblationRow};
use can::train::run::rarest_label;
use can::train::{train, OptimizerConfig, RunConfig, Variant};

use super::{check, Verdict};

pub const PREVALENCES: [f64; 4] = [0.5, 0.2, 0.05, 0.02];
pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const HIT_RATE_FLOOR: f64 = 0.6;
const CORRECT_THRESHOLD: f64 = 0.5;

pub fn gen_config(seed: u64, n: usize) -> GenConfig {
    GenConfig {
        noise_level: 0.5,
        intensity: (0.3, 0.6),
        glyph_size: (8, 14),
        distractors: 3,
        ..GenConfig::new(seed, n, 36, &PREVALENCES)
    }
}

pub fn base_config() -> RunConfig {
    RunConfig {
        crop: 32,
        epochs: 12,
        warmup_epochs: 1,
        patience: None,
        ..RunConfig::default()
    }
}

/// The compared variants, each with the learning rate that scored best on
/// validation in a one-seed pilot over {0.01, 0.03, 0.1, 0.3} on separately
/// seeded data.
pub fn variants() -> Vec<(Variant, f64)> {
    vec![
        (Variant::single_bce(), 0.03),
        (Variant::single_bal(), 0.3),
        (Variant::dual_hadamard(), 0.1),
        (Variant::full_can(), 0.1),
    ]
}

pub struct Benchmark {
    pub report: AblationReport,
    /// Per variant, per seed: rarest-label hit rate among correctly
    /// classified test positives, with the number judged.
    pub hit_rates: Vec<Vec<Option<(f64, usize)>>>,
    pub rare_label: usize,
    pub seconds: f64,
}

fn hit_rate(model: &can::CanModel, test: &Dataset, label: usize) -> Option<(f64, usize)> {
    let maps = localize_dataset(model, test, label, |_, s| s.labels[label] != 0).unwrap();
    let judged: Vec<bool> = maps
        .iter()
        .filter(|(_, r)| r.probability >= CORRECT_THRESHOLD)
        .filter_map(|(_, r)| r.hit)
        .collect();
    (!judged.is_empty()).then(|| {
        (judged.iter().filter(|&&h| h).count() as f64 / judged.len() as f64, judged.len())
    })
}

pub fn run() -> Benchmark {
    let start = Instant::now();
    let train_set = generate(&gen_config(101, 4000)).unwrap();
    let val = generate(&gen_config(102, 500)).unwrap();
    let test = generate(&gen_config(103, 500)).unwrap();
    let rare = rarest_label(&train_set).unwrap();
    let base = base_config();
    let mut rows = Vec::new();
    let mut hit_rates = Vec::new();
    for (v, lr) in variants() {
        let mut reports = Vec::new();
        let mut hits = Vec::new();
        let mut params = 0;
        for &seed in &SEEDS {
            let mut cfg = v.apply(&base, seed);
            cfg.optimizer = OptimizerConfig { lr, momentum: 0.9 };
            let ckpt = train(&cfg, &train_set, &val).unwrap();
            let model = ckpt.selected_model();
            params = model.num_parameters();
            let report = evaluate(model, &test).unwrap();
            println!(
                "  benchmark {:<30} seed {seed}: mean AUROC {:.4}, {:.0}s elapsed",
                v.name,
                report.mean_auroc.unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            );
            reports.push((seed, report));
            hits.push(hit_rate(model, &test, rare));
        }
        rows.push(AblationRow {
            variant: v,
            num_parameters: params,
            reports,
        });
        hit_rates.push(hits);
    }
    let report = AblationReport {
        label_names: test.label_names().to_vec(),
        rows,
    };
    for line in report.to_table().lines() {
        println!("  {line}");
    }
    Benchmark {
        report,
        hit_rates,
        rare_label: rare,
        seconds: start.elapsed().as_secs_f64(),
    }
}

impl Benchmark {
    fn mean(&self, v: &Variant, label: Option<usize>) -> (f64, f64) {
        self.report
            .row(&v.name)
            .and_then(|r| r.summary(label))
            .unwrap_or((f64::NAN, f64::NAN))
    }

    pub fn criterion_5(&self) -> Verdict {
        let order = [
            Variant::full_can(),
            Variant::dual_hadamard(),
            Variant::single_bal(),
            Variant::single_bce(),
        ];
        let means: Vec<f64> = order.iter().map(|v| self.mean(v, None).0).collect();
        let ordered = means.windows(2).all(|w| w[0] >= w[1]);
        let (can_rare, can_se) = self.mean(&Variant::full_can(), Some(self.rare_label));
        let (bce_rare, bce_se) = self.mean(&Variant::single_bce(), Some(self.rare_label));
        let margin = can_rare - bce_rare;
        let se = (can_se.powi(2) + bce_se.powi(2)).sqrt();
        check(
            ordered && margin > se && self.seconds < 1800.0,
            format!(
                "seed-mean AUROC CAN {:.4} / dual-had {:.4} / single+L_bal {:.4} / single+BCE {:.4} (ordered: {ordered}); \
                 rarest label CAN - BCE = {margin:.4} vs standard error {se:.4}; {:.0}s",
                means[0], means[1], means[2], means[3], self.seconds
            ),
        )
    }

    pub fn criterion_6(&self) -> Verdict {
        let names: Vec<String> = variants().into_iter().map(|(v, _)| v.name).collect();
        let rate = |name: &str| {
            let i = names.iter().position(|n| n == name).unwrap();
            let per_seed: Vec<f64> = self.hit_rates[i].iter().flatten().map(|h| h.0).collect();
            let judged: usize = self.hit_rates[i].iter().flatten().map(|h| h.1).sum();
            (mean_and_sem(&per_seed).map_or(f64::NAN, |m| m.0), judged)
        };
        let (can_rate, can_n) = rate(&Variant::full_can().name);
        let (base_rate, base_n) = rate(&Variant::single_bal().name);
        check(
            can_rate >= base_rate && can_rate >= HIT_RATE_FLOOR,
            format!(
                "rarest-label hit rate CAN {can_rate:.3} ({can_n} maps) vs single+L_bal {base_rate:.3} ({base_n} maps), floor {HIT_RATE_FLOOR}"
            ),
        )
    }
}
