//! `facn ablate`: train each capsule variant (full, v1, v2, v3) from the
//! same base configuration for a fixed step budget, then score every cell
//! against the bicubic baseline on the training subset. Writes
//! `ablation.csv` and prints the comparison table.

use std::fs;

use clap::Args as ClapArgs;
use facn_core::model::ModelVariant;
use facn_core::train::{ablation_csv, ablation_harness};
use facn_core::TrainF;

use crate::{train, CliError, Globals};

#[derive(ClapArgs)]
pub struct Args {
    /// Optimizer steps per variant.
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
}

pub fn run(globals: &Globals, args: &Args) -> Result<(), CliError> {
    let cfg = train::load_config(globals)?;
    let ds = train::load_dataset(&cfg)?;
    let out_dir = cfg.out_dir.clone();
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let (k, d) = (cfg.model.k, cfg.model.d);
    let grid: Vec<_> = ModelVariant::ALL.iter().map(|&v| (v, k, d)).collect();
    let cells = ablation_harness::<TrainF>(&cfg, &ds, &grid, args.steps)?;

    let context = vec![
        "facn ablation".to_string(),
        format!("k: {k}"),
        format!("d: {d}"),
        format!("steps: {}", args.steps),
        format!("images: {}", ds.len()),
        format!("seed: {}", cfg.seed),
    ];
    let csv_path = out_dir.join("ablation.csv");
    fs::write(&csv_path, ablation_csv(&cells, &context))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", csv_path.display())))?;

    println!(
        "{:<8} {:>5} {:>5} {:>9} {:>12} {:>12} {:>9} {:>9} {:>9}",
        "variant", "k", "d", "dec_in", "first_loss", "final_loss", "diverged", "psnr", "ssim"
    );
    for c in &cells {
        println!(
            "{:<8} {:>5} {:>5} {:>9} {:>12.5} {:>12.5} {:>9} {:>9.4} {:>9.4}",
            c.variant.to_string(),
            c.k,
            c.d,
            c.decoder_input,
            c.first_total,
            c.final_total,
            c.diverged,
            c.mean_psnr,
            c.mean_ssim
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}
