//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Criteria 5 and 6 share one benchmark run.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use can::cross_attention::{assemble, fuse, transition};
use can::data::{generate, GenConfig};
use can::graph::{Graph, Var};
use can::kernels::Alignment;
use can::layers::{BackboneSpec, ConvLayer, ParamBinder};
use can::losses::{attention_loss, balance_loss, bce_loss, combined_loss, pathogenic_map, LossConfig};
use can::metrics::auroc;
use can::train::{dataset_loss, init_checkpoint, run_epochs, Checkpoint, LossKind, OptimizerConfig, RunConfig};
use can::{CanModel, FusionMode, InitSeeds, ModelConfig, Tensor};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "acceptance/benchmark.rs"]
mod benchmark;

type Verdict = Result<String, String>;

const GRAD_POINTS: u64 = 100;
const GRAD_TOLERANCE: f64 = 1e-4;

fn check(ok: bool, msg: impl Into<String>) -> Verdict {
    if ok {
        Ok(msg.into())
    } else {
        Err(msg.into())
    }
}

fn labels_tensor(r: &mut ChaCha8Rng, n: usize, l: usize) -> Tensor {
    Tensor::from_fn(&[n, l], |_| r.random_bool(0.4) as u8 as f64)
}

fn probs_tensor(r: &mut ChaCha8Rng, n: usize, l: usize) -> Tensor {
    Tensor::from_fn(&[n, l], |_| r.random_range(0.02..0.98))
}

fn random_loss_config(r: &mut ChaCha8Rng, l: usize) -> LossConfig {
    let w_pos: Vec<f64> = (0..l).map(|_| r.random_range(0.05..0.95)).collect();
    let w_neg = w_pos.iter().map(|w| 1.0 - w).collect();
    LossConfig::new(r.random_range(0.0..3.0), r.random_range(0.0..0.5), w_pos, w_neg).unwrap()
}

fn tiny_model(fusion: FusionMode, concat_all: bool, seed: u64) -> CanModel {
    let cfg = ModelConfig {
        backbone_a: BackboneSpec::new(&[2, 3]),
        backbone_b: Some(BackboneSpec::new(&[2, 4])),
        labels: 2,
        fusion,
        concat_all,
        dropout: 0.25,
        input_hw: [8, 8],
        in_channels: 1,
    };
    CanModel::init(cfg, InitSeeds::derive(seed)).unwrap()
}

/// Worst relative error of the full model's loss gradient over every
/// parameter tensor and the input, with dropout active on a fixed mask.
fn model_grad_error(model: &CanModel, images: &Tensor, labels: &Tensor, cfg: &LossConfig, mask_seed: u64) -> f64 {
    let loss_of = |m: &CanModel, g: &mut Graph, x: Var| -> can::Result<(Var, Vec<Var>)> {
        let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
        let out = m.forward(g, x, true, &mut r)?;
        let loss = combined_loss(g, out.probs, labels, out.raw_a, out.raw_b, cfg)?;
        Ok((loss, out.params))
    };
    let mut g = Graph::new();
    let x = g.param(images.clone());
    let (loss, params) = loss_of(model, &mut g, x).unwrap();
    g.backward(loss).unwrap();
    let value = |m: &CanModel, imgs: &Tensor| -> can::Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(imgs.clone());
        let (loss, _) = loss_of(m, &mut g, x)?;
        g.value(loss).item()
    };
    let mut worst = can::gradcheck::max_relative_error(
        &g.grad_or_zeros(x),
        &can::gradcheck::finite_diff_grad(|t| value(model, t), images, FD_STEP).unwrap(),
        FD_FLOOR,
    );
    let tensors: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
    for (i, p) in params.iter().enumerate() {
        let numeric = can::gradcheck::finite_diff_grad(
            |t| {
                let mut m = model.clone();
                let mut ts = tensors.clone();
                ts[i] = t.clone();
                m.set_tensors(ts)?;
                value(&m, images)
            },
            &tensors[i],
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(can::gradcheck::max_relative_error(&g.grad_or_zeros(*p), &numeric, FD_FLOOR));
    }
    worst
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(slot) => slot.1 = slot.1.max(e),
        None => worst.push((name, e)),
    };
    for point in 0..GRAD_POINTS {
        let mut r = rng(1000 + point);
        let seed = 5000 + point;
        // layers
        let x = random_tensor(&mut r, &[2, 2, 5, 5]);
        let k = random_tensor(&mut r, &[3, 2, 3, 3]);
        let b = random_tensor(&mut r, &[3]);
        let (kc, bc) = (k.clone(), b.clone());
        record("conv2d/input", grad_error(&x, seed, |g, v| {
            let (kv, bv) = (g.constant(kc.clone()), g.constant(bc.clone()));
            g.conv2d(v, kv, bv, 1, 1)
        }));
        let xc = x.clone();
        let bc = b.clone();
        record("conv2d/kernel", grad_error(&k, seed, |g, v| {
            let (xv, bv) = (g.constant(xc.clone()), g.constant(bc.clone()));
            g.conv2d(xv, v, bv, 2, 1)
        }));
        let (xc, kc) = (x.clone(), k.clone());
        record("conv2d/bias", grad_error(&b, seed, |g, v| {
            let (xv, kv) = (g.constant(xc.clone()), g.constant(kc.clone()));
            g.conv2d(xv, kv, v, 1, 0)
        }));
        let xr = away_from_zero(&mut r, &[2, 3, 4]);
        record("relu", grad_error(&xr, seed, |g, v| Ok(g.relu(v))));
        let xp = random_tensor(&mut r, &[2, 2, 4, 6]);
        record("max_pool2d", grad_error(&xp, seed, |g, v| g.max_pool2d(v, 2, 2)));
        record("global_avg_pool", grad_error(&xp, seed, |g, v| g.global_avg_pool(v)));
        let xd = random_tensor(&mut r, &[3, 5]);
        let w = random_tensor(&mut r, &[4, 5]);
        let bd = random_tensor(&mut r, &[4]);
        let (wc, bc) = (w.clone(), bd.clone());
        record("dense/input", grad_error(&xd, seed, |g, v| {
            let (wv, bv) = (g.constant(wc.clone()), g.constant(bc.clone()));
            g.dense(v, wv, bv)
        }));
        let (xc, bc) = (xd.clone(), bd.clone());
        record("dense/weight", grad_error(&w, seed, |g, v| {
            let (xv, bv) = (g.constant(xc.clone()), g.constant(bc.clone()));
            g.dense(xv, v, bv)
        }));
        let (xc, wc) = (xd.clone(), w.clone());
        record("dense/bias", grad_error(&bd, seed, |g, v| {
            let (xv, wv) = (g.constant(xc.clone()), g.constant(wc.clone()));
            g.dense(xv, wv, v)
        }));
        let xs = Tensor::from_fn(&[2, 6], |_| r.random_range(-6.0..6.0));
        record("sigmoid", grad_error(&xs, seed, |g, v| Ok(g.sigmoid(v))));
        record("dropout", grad_error(&xs, seed, |g, v| {
            let mut mask = ChaCha8Rng::seed_from_u64(seed);
            g.dropout(v, 0.3, true, &mut mask)
        }));
        let xz = random_tensor(&mut r, &[2, 3, 4, 4]);
        record("resize", grad_error(&xz, seed, |g, v| g.resize_bilinear(v, (7, 5), Alignment::Corners)));

        // fusion head
        let fa = random_tensor(&mut r, &[2, 3, 3, 3]);
        let fb = random_tensor(&mut r, &[2, 3, 3, 3]);
        for (name, mode) in [("fuse/hadamard", FusionMode::Hadamard), ("fuse/add", FusionMode::Add), ("fuse/max", FusionMode::Max)] {
            let fbc = fb.clone();
            record(name, grad_error(&fa, seed, move |g, v| {
                let other = g.constant(fbc.clone());
                fuse(g, v, other, mode)
            }));
        }
        let layer = ConvLayer::init(&mut r, 3, 2, 1, 0, 1.0);
        let (fbc, layer_c) = (fb.clone(), layer.clone());
        record("transition+assemble", grad_error(&fa, seed, move |g, v| {
            let mut bound = ParamBinder::new(false);
            let gated = g.relu(v);
            let ta = transition(g, gated, &layer_c, &mut bound)?;
            let other = g.constant(fbc.clone());
            let tb = transition(g, other, &layer_c, &mut bound)?;
            let ca = fuse(g, ta, tb, FusionMode::Hadamard)?;
            assemble(g, ca, ta, tb, true)
        }));

        // losses
        let probs = probs_tensor(&mut r, 4, 3);
        let labels = labels_tensor(&mut r, 4, 3);
        let cfg = random_loss_config(&mut r, 3);
        let lc = labels.clone();
        record("bce_loss", grad_error(&probs, seed, move |g, v| bce_loss(g, v, &lc)));
        let (lc, cc) = (labels.clone(), cfg.clone());
        record("balance_loss", grad_error(&probs, seed, move |g, v| balance_loss(g, v, &lc, &cc)));
        let raw_a = random_tensor(&mut r, &[3, 4, 4, 4]);
        let raw_b = random_tensor(&mut r, &[3, 2, 3, 3]);
        let rb = raw_b.clone();
        record("attention_loss/a", grad_error(&raw_a, seed, move |g, v| {
            let other = g.constant(rb.clone());
            attention_loss(g, v, other)
        }));
        let ra = raw_a.clone();
        record("attention_loss/b", grad_error(&raw_b, seed, move |g, v| {
            let other = g.constant(ra.clone());
            attention_loss(g, other, v)
        }));
        record("pathogenic_map", grad_error(&raw_a, seed, |g, v| pathogenic_map(g, v, (3, 3))));

        // the whole network under the combined objective
        let fusion = FusionMode::ALL[(point % 3) as usize];
        let model = tiny_model(fusion, point % 2 == 0, seed);
        let images = random_tensor(&mut r, &[2, 1, 8, 8]);
        let labels = labels_tensor(&mut r, 2, 2);
        let cfg = random_loss_config(&mut r, 2);
        record("can_forward+combined_loss", model_grad_error(&model, &images, &labels, &cfg, seed));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let (name, e) = worst.iter().copied().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let failing: Vec<String> = worst
        .iter()
        .filter(|(_, e)| !(*e < GRAD_TOLERANCE))
        .map(|(n, e)| format!("{n}={e:.2e}"))
        .collect();
    let msg = format!(
        "{} checks x {GRAD_POINTS} points, worst rel err {e:.2e} ({name}), {elapsed:.1}s{}",
        worst.len(),
        if failing.is_empty() { String::new() } else { format!("; over tolerance: {}", failing.join(", ")) }
    );
    check(failing.is_empty() && elapsed < 120.0, msg)
}

fn criterion_2() -> Verdict {
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let mut r = rng(2000 + case);
        let (n, l) = (r.random_range(1..9), r.random_range(1..6));
        let probs = Tensor::from_fn(&[n, l], |_| r.random_range(0.0..1.0));
        let labels = labels_tensor(&mut r, n, l);
        let mut g = Graph::new();
        let p = g.constant(probs);
        let half = LossConfig::uniform(0.0, 0.0, l);
        let bal = balance_loss(&mut g, p, &labels, &half).unwrap();
        let bce = bce_loss(&mut g, p, &labels).unwrap();
        worst = worst.max((g.value(bal).item().unwrap() - 0.5 * g.value(bce).item().unwrap()).abs());

        let mut cfg = random_loss_config(&mut r, l);
        cfg.alpha = 0.0;
        let fa = g.constant(random_tensor(&mut r, &[n, 3, 4, 4]));
        let fb = g.constant(random_tensor(&mut r, &[n, 2, 4, 4]));
        let comb = combined_loss(&mut g, p, &labels, fa, Some(fb), &cfg).unwrap();
        let bal = balance_loss(&mut g, p, &labels, &cfg).unwrap();
        worst = worst.max((g.value(comb).item().unwrap() - g.value(bal).item().unwrap()).abs());

        let mut model = tiny_model(FusionMode::Hadamard, true, case);
        let cross = model.cross.as_mut().unwrap();
        cross.backbone_b = model.backbone_a.clone();
        model.config.backbone_b = Some(model.config.backbone_a.clone());
        let cross = model.cross.as_mut().unwrap();
        cross.transition_b = cross.transition_a.clone();
        let images = random_tensor(&mut r, &[n, 1, 8, 8]);
        let mut g = Graph::new();
        let x = g.constant(images);
        let out = model.forward(&mut g, x, false, &mut r).unwrap();
        let att = attention_loss(&mut g, out.raw_a, out.raw_b.unwrap()).unwrap();
        worst = worst.max(g.value(att).item().unwrap().abs());
    }
    check(worst <= 1e-12, format!("100 random batches, worst deviation {worst:.2e}"))
}

fn criterion_3() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut r = rng(3000);
    for _ in 0..20 {
        let (n, c, o) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..5));
        let (h, w) = (r.random_range(3..10), r.random_range(3..10));
        let (stride, pad) = (r.random_range(1..3), r.random_range(0..2));
        let k = 3;
        if (h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0 {
            continue;
        }
        let x = random_tensor(&mut r, &[n, c, h, w]);
        let kern = random_tensor(&mut r, &[o, c, k, k]);
        let b = random_tensor(&mut r, &[o]);
        let mut g = Graph::new();
        let (xv, kv, bv) = (g.constant(x.clone()), g.constant(kern.clone()), g.constant(b.clone()));
        let y = g.conv2d(xv, kv, bv, stride, pad).unwrap();
        worst = worst.max(g.value(y).max_abs_diff(&naive_conv(&x, &kern, &b, stride, pad)));

        let xp = random_tensor(&mut r, &[n, c, 2 * h, 2 * w]);
        let pv = g.constant(xp.clone());
        let py = g.max_pool2d(pv, 2, 2).unwrap();
        worst = worst.max(g.value(py).max_abs_diff(&naive_pool(&xp, 2, 2)));

        let xd = random_tensor(&mut r, &[n, h]);
        let wd = random_tensor(&mut r, &[o, h]);
        let bd = random_tensor(&mut r, &[o]);
        let (a, b2, c2) = (g.constant(xd.clone()), g.constant(wd.clone()), g.constant(bd.clone()));
        let dy = g.dense(a, b2, c2).unwrap();
        worst = worst.max(g.value(dy).max_abs_diff(&naive_dense(&xd, &wd, &bd)));

        let to = (r.random_range(1..12), r.random_range(1..12));
        let rv = g.constant(x.clone());
        let ry = g.resize_bilinear(rv, to, Alignment::Corners).unwrap();
        worst = worst.max(g.value(ry).max_abs_diff(&naive_resize_corners(&x, to)));
    }
    let mut mismatches = 0;
    for case in 0..1000 {
        let n = r.random_range(1..=1000);
        let levels = if case % 2 == 0 { 7 } else { 1 << 30 };
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64).collect();
        let labels: Vec<u8> = (0..n).map(|_| r.random_bool(0.25) as u8).collect();
        if auroc(&scores, &labels).unwrap() != pairwise_auroc(&scores, &labels) {
            mismatches += 1;
        }
    }
    check(
        worst <= 1e-12 && mismatches == 0,
        format!("layer oracles worst {worst:.2e}; auroc {mismatches}/1000 mismatches vs pair counting"),
    )
}

fn criterion_4() -> Verdict {
    let mut r = rng(4000);
    let mut failures = Vec::new();
    for _ in 0..100 {
        let a = random_tensor(&mut r, &[2, 3, 4, 4]);
        let mut b = random_tensor(&mut r, &[2, 3, 4, 4]);
        let zero_at = r.random_range(0..b.len());
        b.data_mut()[zero_at] = 0.0;
        let mut g = Graph::new();
        let (av, bv, ones) = (g.constant(a.clone()), g.constant(b.clone()), g.constant(Tensor::ones(a.shape())));
        let ab = fuse(&mut g, av, bv, FusionMode::Hadamard).unwrap();
        let ba = fuse(&mut g, bv, av, FusionMode::Hadamard).unwrap();
        let a1 = fuse(&mut g, av, ones, FusionMode::Hadamard).unwrap();
        if g.value(ab).data()[zero_at] != 0.0 {
            failures.push("zero absorption");
        }
        if g.value(ab) != g.value(ba) {
            failures.push("commutativity");
        }
        if g.value(a1) != &a {
            failures.push("all-ones identity");
        }
    }
    let counts: Vec<usize> = FusionMode::ALL
        .iter()
        .map(|&m| tiny_model(m, true, 1).num_parameters())
        .collect();
    if counts.windows(2).any(|w| w[0] != w[1]) {
        failures.push("parameter parity");
    }
    failures.dedup();
    check(
        failures.is_empty(),
        format!("100 random cases; parameters per mode {counts:?}{}", if failures.is_empty() { String::new() } else { format!("; failed: {failures:?}") }),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn small_run_config() -> RunConfig {
    RunConfig {
        backbone_a: BackboneSpec::new(&[4, 6]),
        backbone_b: Some(BackboneSpec::new(&[4, 8])),
        crop: 32,
        batch_size: 16,
        epochs: 3,
        warmup_epochs: 1,
        patience: None,
        optimizer: OptimizerConfig { lr: 0.01, momentum: 0.9 },
        seed: 9,
        ..RunConfig::default()
    }
}

fn criterion_7() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut gen = GenConfig::new(21, 96, 36, &[0.5, 0.3]);
    gen.distractors = 1;
    let data = generate(&gen).unwrap();
    let val = generate(&GenConfig { seed: 22, n_samples: 48, ..gen.clone() }).unwrap();
    let mut problems = Vec::new();
    if generate(&gen).unwrap().to_bytes().unwrap() != data.to_bytes().unwrap() {
        problems.push("dataset generation not deterministic");
    }
    let path = tmp.path().join("d.cand");
    data.save(&path).unwrap();
    let loaded = can::Dataset::load(&path).unwrap();
    if loaded != data || loaded.to_bytes().unwrap() != std::fs::read(&path).unwrap() {
        problems.push("dataset round trip");
    }

    let cfg = small_run_config();
    let full = |tag: &str| {
        let mut ck = init_checkpoint(&cfg, &data).unwrap();
        run_epochs(&mut ck, &data, &val, None, |_| Ok(())).unwrap();
        let dir = tmp.path().join(tag);
        ck.save(&dir).unwrap();
        (ck, dir)
    };
    let (a, dir_a) = full("a");
    let (b, dir_b) = full("b");
    if dir_bytes(&dir_a) != dir_bytes(&dir_b) || a.history != b.history {
        problems.push("same seed gave different checkpoints or metrics");
    }
    let reloaded = Checkpoint::load(&dir_a).unwrap();
    let dir_c = tmp.path().join("c");
    reloaded.save(&dir_c).unwrap();
    if reloaded != a || dir_bytes(&dir_a) != dir_bytes(&dir_c) {
        problems.push("checkpoint round trip");
    }

    let mut part = init_checkpoint(&cfg, &data).unwrap();
    run_epochs(&mut part, &data, &val, Some(1), |_| Ok(())).unwrap();
    let mid = tmp.path().join("mid");
    part.save(&mid).unwrap();
    drop(part);
    let mut resumed = Checkpoint::load(&mid).unwrap();
    run_epochs(&mut resumed, &data, &val, None, |_| Ok(())).unwrap();
    let dir_r = tmp.path().join("r");
    resumed.save(&dir_r).unwrap();
    if resumed != a || dir_bytes(&dir_r) != dir_bytes(&dir_a) {
        problems.push("resume differs from the uninterrupted run");
    }
    check(
        problems.is_empty(),
        format!(
            "dataset, checkpoint, rerun and resume-after-epoch-1 compared bytewise{}",
            if problems.is_empty() { String::new() } else { format!("; {problems:?}") }
        ),
    )
}

fn criterion_8() -> Verdict {
    let train = generate(&GenConfig::new(31, 512, 36, &[0.5, 0.5])).unwrap();
    let val = generate(&GenConfig::new(32, 64, 36, &[0.5, 0.5])).unwrap();
    let cfg = RunConfig {
        crop: 32,
        warmup_epochs: 0,
        max_steps: Some(200),
        epochs: 100,
        patience: None,
        optimizer: OptimizerConfig { lr: 0.03, momentum: 0.9 },
        seed: 8,
        ..RunConfig::default()
    };
    let mut ck = init_checkpoint(&cfg, &train).unwrap();
    let loss = ck.loss_config().unwrap();
    let initial = dataset_loss(&ck.model, &train, LossKind::Balance, &loss).unwrap();
    run_epochs(&mut ck, &train, &val, None, |_| Ok(())).unwrap();
    let last = dataset_loss(&ck.model, &train, LossKind::Balance, &loss).unwrap();
    let ratio = last / initial;

    let tmp = tempfile::tempdir().unwrap();
    let bad = RunConfig {
        optimizer: OptimizerConfig { lr: 1e300, momentum: 0.9 },
        data: Some(can::train::DataSpec::Generated {
            generate: GenConfig::new(33, 64, 36, &[0.5]),
            fractions: (0.5, 0.25, 0.25),
            split_seed: 0,
        }),
        out_dir: Some("run".into()),
        ..small_run_config()
    };
    let cfg_path = tmp.path().join("diverge.json");
    std::fs::write(&cfg_path, serde_json::to_string(&bad).unwrap()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_can"))
        .args(["train", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    let code = out.status.code();
    check(
        ck.step == 200 && ratio <= 0.5 && code == Some(3),
        format!(
            "{} steps, loss {initial:.4} -> {last:.4} (ratio {ratio:.3}); divergent run exit code {code:?}",
            ck.step
        ),
    )
}

fn main() {
    let start = Instant::now();
    // CAN_ACCEPTANCE=1,7 runs a subset while iterating
    let only: Option<Vec<String>> = std::env::var("CAN_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let bench = std::cell::OnceCell::new();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("1 gradient fidelity", Box::new(criterion_1)),
        ("2 loss degeneracies", Box::new(criterion_2)),
        ("3 oracle equivalence", Box::new(criterion_3)),
        ("4 fusion invariants", Box::new(criterion_4)),
        ("5 imbalance benchmark", Box::new(|| bench.get_or_init(benchmark::run).criterion_5())),
        ("6 localization", Box::new(|| bench.get_or_init(benchmark::run).criterion_6())),
        ("7 determinism and persistence", Box::new(criterion_7)),
        ("8 training smoke test", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    let mut lines = Vec::new();
    for (name, f) in &criteria {
        let id = name.split(' ').next().unwrap_or_default();
        if only.as_ref().is_some_and(|o| !o.iter().any(|c| c == id)) {
            println!("[SKIP] {name}");
            continue;
        }
        let t = Instant::now();
        let verdict = f();
        let line = match &verdict {
            Ok(m) => format!("[PASS] {name}: {m} ({:.1}s)", t.elapsed().as_secs_f64()),
            Err(m) => {
                failed += 1;
                format!("[FAIL] {name}: {m} ({:.1}s)", t.elapsed().as_secs_f64())
            }
        };
        println!("{line}");
        lines.push(line);
    }
    println!();
    println!("acceptance summary ({:.0}s total)", start.elapsed().as_secs_f64());
    for line in &lines {
        println!("{line}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
