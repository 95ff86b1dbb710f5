use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use can::data::{generate, Dataset, GenConfig};
use can::localization::{export, localize_dataset};
use can::metrics::evaluate;
use can::train::run::{ablate_run, train_run};
use can::train::{load_model, AblationConfig, RunConfig};
use can::{CanError, Result};

#[derive(Parser)]
#[command(name = "can", version, about = "Cross-attention networks for imbalanced multi-label images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic glyph dataset.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Per-label prevalences, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.1,0.02")]
        prevalence: Vec<f64>,
        #[arg(long, default_value_t = 72)]
        hw: usize,
        #[arg(long, default_value_t = 0)]
        distractors: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the run's last checkpoint if present.
        #[arg(long)]
        resume: bool,
    },
    /// Per-label AUROC of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run an ablation grid from a JSON config.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write class activation maps for one label's positives.
    Localize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Label index or name.
        #[arg(long)]
        label: String,
        #[arg(long)]
        out: PathBuf,
        /// Also map samples that do not carry the label.
        #[arg(long)]
        all: bool,
    },
}

fn config_base(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CanError::Config(format!("{}: {e}", path.display())))
}

fn resolve_label(dataset: &Dataset, label: &str) -> Result<usize> {
    if let Ok(i) = label.parse::<usize>() {
        return Ok(i);
    }
    dataset
        .label_names()
        .iter()
        .position(|n| n == label)
        .ok_or_else(|| CanError::Config(format!("unknown label {label:?}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            seed,
            n,
            prevalence,
            hw,
            distractors,
            out,
        } => {
            let mut cfg = GenConfig::new(seed, n, hw, &prevalence);
            cfg.distractors = distractors;
            let dataset = generate(&cfg)?;
            dataset.save(&out)?;
            println!(
                "wrote {} samples to {} (positives per label: {:?})",
                dataset.len(),
                out.display(),
                dataset.pos_counts()
            );
        }
        Command::Train { config, resume } => {
            let cfg = RunConfig::from_json_file(&config)?;
            let outcome = train_run(&cfg, config_base(&config), resume)?;
            if let Some(t) = outcome.test {
                print!("{}", t.to_table("AUROC"));
            }
            println!("run written to {}", outcome.dir.display());
        }
        Command::Eval {
            checkpoint,
            dataset,
            json,
        } => {
            let model = load_model(&checkpoint)?;
            let report = evaluate(&model, &Dataset::load(&dataset)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report.to_json())?);
            } else {
                print!("{}", report.to_table("AUROC"));
            }
        }
        Command::Ablate { config } => {
            let grid: AblationConfig = read_json(&config)?;
            let report = ablate_run(&grid, config_base(&config), |line| eprintln!("{line}"))?;
            print!("{}", report.to_table());
        }
        Command::Localize {
            checkpoint,
            dataset,
            label,
            out,
            all,
        } => {
            let model = load_model(&checkpoint)?;
            let dataset = Dataset::load(&dataset)?;
            let label = resolve_label(&dataset, &label)?;
            let maps = localize_dataset(&model, &dataset, label, |_, s| all || s.labels[label] != 0)?;
            export(&out, &maps)?;
            let judged: Vec<bool> = maps.iter().filter_map(|(_, r)| r.hit).collect();
            let hits = judged.iter().filter(|&&h| h).count();
            println!(
                "{} maps written to {}; {hits}/{} peaks inside their box",
                maps.len(),
                out.display(),
                judged.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
