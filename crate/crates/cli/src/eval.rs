//! `facn eval`: score a trained checkpoint against a directory of LR/HR
//! image pairs. Pairs are matched by filename; unpaired files are skipped
//! with a warning. Writes `report.csv` (per-image PSNR/SSIM for the model
//! and the bicubic baseline, plus means) and a four-panel comparison grid
//! per image under `grids/`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args as ClapArgs;
use facn_core::train::{bicubic_baseline, evaluate_staged, super_resolve, StagedImage, Trainer};
use facn_core::image::Image;
use facn_core::TrainF;

use crate::grid::comparison_grid;
use crate::{train, CliError, Globals};

#[derive(ClapArgs)]
pub struct Args {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Directory of low-resolution inputs (.png).
    #[arg(long = "lr", value_name = "DIR")]
    pub lr_dir: PathBuf,
    /// Directory of high-resolution references (.png).
    #[arg(long = "hr", value_name = "DIR")]
    pub hr_dir: PathBuf,
    /// Skip writing the per-image comparison grids.
    #[arg(long)]
    pub no_grids: bool,
}

/// Names of `.png` files directly inside `dir`, sorted.
pub fn png_names(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", dir.display())))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let entry =
            entry.map_err(|e| CliError::Runtime(format!("cannot list {}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") && entry.path().is_file() {
            names.insert(name);
        }
    }
    Ok(names)
}

pub fn run(globals: &Globals, args: &Args) -> Result<(), CliError> {
    let cfg = train::load_config(globals)?;
    let ckpt = facn_core::nn::Checkpoint::load(&args.checkpoint)?;
    let mut trainer = Trainer::<TrainF>::restore(cfg.clone(), &ckpt)?;

    let lr_names = png_names(&args.lr_dir)?;
    let hr_names = png_names(&args.hr_dir)?;
    let paired: Vec<&String> = lr_names.intersection(&hr_names).collect();
    let mut warnings = Vec::new();
    for name in lr_names.symmetric_difference(&hr_names) {
        let side = if lr_names.contains(name) { "hr" } else { "lr" };
        warnings.push(format!("skipped {name}: no {side} counterpart"));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if paired.is_empty() {
        return Err(CliError::Validation(format!(
            "no matching .png pairs between {} and {}",
            args.lr_dir.display(),
            args.hr_dir.display()
        )));
    }

    let out_dir = globals.out_dir(&cfg.out_dir);
    let grids_dir = out_dir.join("grids");
    fs::create_dir_all(&grids_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", grids_dir.display())))?;

    let hr_size = cfg.model.hr_size;
    let model = trainer.model_mut();
    let mut staged = Vec::with_capacity(paired.len());
    for name in &paired {
        let lr = Image::<TrainF>::load_png(args.lr_dir.join(name))?;
        let hr = Image::<TrainF>::load_png(args.hr_dir.join(name))?;
        let sr = super_resolve(model, &lr)?;
        let baseline = bicubic_baseline(&lr, hr_size)?;
        if !args.no_grids {
            comparison_grid(&hr, &lr, &baseline, &sr).save_png(grids_dir.join(name))?;
        }
        staged.push(StagedImage { name: (*name).clone(), hr, sr, baseline });
    }
    let report = evaluate_staged(&staged)?;

    let mut context = vec![
        "facn eval report".to_string(),
        format!("checkpoint: {}", args.checkpoint.display()),
        format!("config_hash: {}", cfg.hash()),
        format!("pairs: {} (skipped {})", staged.len(), warnings.len()),
    ];
    context.extend(warnings.iter().map(|w| format!("warning: {w}")));
    let report_path = out_dir.join("report.csv");
    fs::write(&report_path, report.to_csv(&context))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", report_path.display())))?;

    println!(
        "evaluated {} pair(s): mean psnr {:.4} dB (bicubic {:.4}), mean ssim {:.4} (bicubic {:.4})",
        report.rows.len(),
        report.mean_psnr,
        report.mean_psnr_bicubic,
        report.mean_ssim,
        report.mean_ssim_bicubic
    );
    println!("wrote {}", report_path.display());
    Ok(())
}
