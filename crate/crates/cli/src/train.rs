//! `facn train`: load the config, train for the configured number of
//! epochs, stream per-step metrics to a CSV, and write checkpoints on the
//! configured cadence (plus a final one).

use std::fs;
use std::io::Write;
use std::path::Path;

use clap::Args as ClapArgs;
use facn_core::train::{Dataset, StepRecord, TrainConfig, Trainer};
use facn_core::TrainF;

use crate::{CliError, Globals};

#[derive(ClapArgs)]
pub struct Args {
    /// Resume from this checkpoint instead of initializing fresh.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<std::path::PathBuf>,
}

/// Resolve the effective config: file + env (handled by the loader), then
/// the `--seed` / `--out` flags on top.
pub fn load_config(globals: &Globals) -> Result<TrainConfig, CliError> {
    let path = globals.require_config()?;
    let mut cfg = TrainConfig::from_file(path)?;
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    cfg.out_dir = globals.out_dir(&cfg.out_dir);
    Ok(cfg)
}

pub fn load_dataset(cfg: &TrainConfig) -> Result<Dataset<TrainF>, CliError> {
    Ok(Dataset::load(
        &cfg.dataset_dir,
        &cfg.attributes,
        cfg.model.hr_size,
        cfg.limit,
    )?)
}

fn save_checkpoint(trainer: &Trainer<TrainF>, dir: &Path, label: &str) -> Result<(), CliError> {
    let path = dir.join(format!("{label}.ckpt"));
    trainer.checkpoint().save(&path)?;
    Ok(())
}

pub fn run(globals: &Globals, args: &Args) -> Result<(), CliError> {
    let cfg = load_config(globals)?;
    let ds = load_dataset(&cfg)?;
    let out_dir = cfg.out_dir.clone();
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = facn_core::nn::Checkpoint::load(path)?;
            Trainer::<TrainF>::restore(cfg.clone(), &ckpt)?
        }
        None => Trainer::<TrainF>::new(cfg.clone())?,
    };

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", metrics_path.display())))?;
    let mut emit = |line: &str| -> Result<(), CliError> {
        writeln!(metrics, "{line}")
            .map_err(|e| CliError::Runtime(format!("cannot write metrics: {e}")))
    };
    emit("# facn train metrics")?;
    emit(&format!("# config_hash: {}", cfg.hash()))?;
    emit(&format!("# seed: {}", cfg.seed))?;
    emit(&format!(
        "# model: {} k={} d={} hr={}",
        cfg.model.variant, cfg.model.k, cfg.model.d, cfg.model.hr_size
    ))?;
    emit(StepRecord::csv_header())?;

    let first_epoch = trainer.epoch();
    for _ in first_epoch..cfg.epochs {
        let records = trainer.train_epoch(&ds)?;
        for r in &records {
            emit(&r.csv_row())?;
        }
        let epoch = trainer.epoch(); // epochs completed so far
        if let Some(last) = records.last() {
            println!(
                "epoch {epoch}/{}: lr {:.3e} total {:.5} mse {:.5}",
                cfg.epochs, last.lr, last.total, last.mse_final
            );
        }
        if epoch % cfg.checkpoint_every == 0 {
            save_checkpoint(&trainer, &out_dir, &format!("epoch_{epoch:04}"))?;
        }
    }
    save_checkpoint(&trainer, &out_dir, "final")?;
    println!(
        "trained {} epoch(s), {} step(s); wrote {}",
        trainer.epoch(),
        trainer.global_step(),
        metrics_path.display()
    );
    Ok(())
}
