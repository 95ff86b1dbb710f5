//! Run directories. A run writes
//!
//! ```text
//! <out>/config.json          snapshot of the RunConfig
//! <out>/checkpoints/epoch_NNN
//! <out>/checkpoints/last     resumable state after the latest epoch
//! <out>/metrics.json         history, validation best, test report
//! <out>/table.txt            per-label test AUROC
//! <out>/heatmaps/            CAMs for the rarest label's test positives
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::data::Dataset;
use crate::error::{CanError, Result};
use crate::localization::{export, localize_dataset};
use crate::metrics::{evaluate, EvalReport};
use crate::train::ablation::{ablate, AblationConfig, AblationReport};
use crate::train::checkpoint::Checkpoint;
use crate::train::config::RunConfig;
use crate::train::trainer::{init_checkpoint, run_epochs};

const MAX_HEATMAPS: usize = 16;

pub struct RunOutcome {
    pub dir: PathBuf,
    pub checkpoint: Checkpoint,
    pub test: Option<EvalReport>,
}

fn out_dir(config: &RunConfig, base: &Path) -> Result<PathBuf> {
    config
        .out_dir
        .as_ref()
        .map(|d| base.join(d))
        .ok_or_else(|| CanError::config("the run config has no out_dir"))
}

/// Index of the label with the fewest training positives.
pub fn rarest_label(dataset: &Dataset) -> Option<usize> {
    (0..dataset.labels()).min_by_key(|&l| dataset.pos_counts()[l])
}

/// Train (or, with `resume`, continue from `checkpoints/last`) and write
/// the run directory. Relative paths resolve against `base`.
pub fn train_run(config: &RunConfig, base: &Path, resume: bool) -> Result<RunOutcome> {
    config.validate()?;
    let dir = out_dir(config, base)?;
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| CanError::config("the run config has no data section"))?;
    let splits = data.load(base)?;
    let ckpt_dir = dir.join("checkpoints");
    let last = ckpt_dir.join("last");
    let mut ckpt = if resume && last.exists() {
        let ckpt = Checkpoint::load(&last)?;
        if ckpt.config != *config {
            return Err(CanError::config("the checkpoint was written by a different config"));
        }
        ckpt
    } else {
        init_checkpoint(config, &splits.train)?
    };
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    let every = config.checkpoint_every_epoch;
    run_epochs(&mut ckpt, &splits.train, &splits.val, None, |c| {
        if every {
            c.save(ckpt_dir.join(format!("epoch_{:03}", c.epoch)))?;
        }
        c.save(&last)
    })?;
    if !last.exists() {
        ckpt.save(&last)?;
    }
    let model = ckpt.selected_model();
    let val = evaluate(model, &splits.val)?;
    let test = splits.test.as_ref().map(|t| evaluate(model, t)).transpose()?;
    let mut table = format!("validation\n{}", val.to_table("AUROC"));
    if let Some(t) = &test {
        table.push_str(&format!("\ntest\n{}", t.to_table("AUROC")));
    }
    fs::write(dir.join("table.txt"), table)?;
    let metrics = json!({
        "epochs": ckpt.epoch,
        "steps": ckpt.step,
        "history": ckpt.history,
        "best_epoch": ckpt.best.as_ref().map(|b| b.epoch),
        "best_val_mean_auroc": ckpt.best.as_ref().map(|b| b.val_mean_auroc),
        "val": val.to_json(),
        "test": test.as_ref().map(EvalReport::to_json),
    });
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    if let (Some(t), Some(label)) = (&splits.test, rarest_label(&splits.train)) {
        let mut taken = 0;
        let maps = localize_dataset(model, t, label, |_, s| {
            let keep = s.labels[label] != 0 && taken < MAX_HEATMAPS;
            taken += keep as usize;
            keep
        })?;
        export(dir.join("heatmaps"), &maps)?;
    }
    Ok(RunOutcome {
        dir,
        checkpoint: ckpt,
        test,
    })
}

/// Run an ablation grid and write `ablation.json` and `table.txt` into
/// the base config's `out_dir`.
pub fn ablate_run(grid: &AblationConfig, base: &Path, mut log: impl FnMut(&str)) -> Result<AblationReport> {
    grid.validate()?;
    let dir = out_dir(&grid.base, base)?;
    let data = grid
        .base
        .data
        .as_ref()
        .ok_or_else(|| CanError::config("the base config has no data section"))?;
    let splits = data.load(base)?;
    let test = splits
        .test
        .as_ref()
        .ok_or_else(|| CanError::config("an ablation needs a test split"))?;
    let report = ablate(grid, &splits.train, &splits.val, test, |v, seed, r| {
        log(&format!(
            "{} seed {seed}: mean AUROC {}",
            v.name,
            r.mean_auroc.map_or("n/a".to_string(), |m| format!("{m:.4}"))
        ))
    })?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(grid)?)?;
    fs::write(dir.join("ablation.json"), serde_json::to_string_pretty(&report.to_json())?)?;
    fs::write(dir.join("table.txt"), report.to_table())?;
    Ok(report)
}
