//! `facn degrade`: run every PNG in a directory through the chosen
//! degradation model and write the LR results plus a manifest recording the
//! spec and the per-image seed. Reruns with the same seed are byte-identical.

use std::fs;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use facn_core::image::{degrade, DegradationKind, DegradationSpec, Image};
use facn_core::train::eval_spec;

use crate::{CliError, Globals};

#[derive(ClapArgs)]
pub struct Args {
    /// Directory of HR PNG images.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,

    /// Degradation model: bic, bicn, or bbicn.
    #[arg(long, default_value = "bicn")]
    pub kind: String,

    /// Downscale factor.
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
}

fn base_spec(kind: &str, scale: usize) -> Result<DegradationSpec, CliError> {
    let kind: DegradationKind = kind
        .parse()
        .map_err(|_| CliError::Validation(format!("unknown degradation kind '{kind}'")))?;
    let spec = DegradationSpec::new(kind, scale, 0);
    spec.validate()?;
    Ok(spec)
}

pub fn run(globals: &Globals, args: &Args) -> Result<(), CliError> {
    let spec = base_spec(&args.kind, args.scale)?;
    let out_dir = globals.out_dir(std::path::Path::new("out"));

    let mut names: Vec<String> = fs::read_dir(&args.input)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", args.input.display())))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| name.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Validation(format!(
            "no .png files in {}",
            args.input.display()
        )));
    }

    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let master = globals.seed();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (index, name) in names.iter().enumerate() {
        let per_image = eval_spec(&spec, master, index);
        let result = Image::<f32>::load_png(args.input.join(name))
            .and_then(|hr| degrade(&hr, &per_image))
            .and_then(|lr| lr.save_png(out_dir.join(name)));
        match result {
            Ok(()) => rows.push((name.clone(), per_image.seed)),
            Err(e) => failures.push((name.clone(), e.to_string())),
        }
    }

    let mut manifest = String::new();
    manifest.push_str("# facn degrade manifest\n");
    manifest.push_str(&format!("# kind: {}\n", args.kind));
    manifest.push_str(&format!("# scale: {}\n", spec.scale));
    manifest.push_str(&format!("# noise_level: {}\n", spec.noise_level));
    manifest.push_str(&format!("# blur_size: {}\n", spec.blur_size));
    manifest.push_str(&format!("# blur_sigma: {}\n", spec.blur_sigma));
    manifest.push_str(&format!("# master_seed: {master}\n"));
    manifest.push_str("# columns: name,seed\n");
    manifest.push_str("name,seed\n");
    for (name, seed) in &rows {
        manifest.push_str(&format!("{name},{seed}\n"));
    }
    if !failures.is_empty() {
        manifest.push_str("# failures:\n");
        for (name, msg) in &failures {
            manifest.push_str(&format!("# failed: {name}: {msg}\n"));
        }
    }
    let manifest_path = out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", manifest_path.display())))?;

    println!(
        "degraded {} image(s) into {} ({} failed)",
        rows.len(),
        out_dir.display(),
        failures.len()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        for (name, msg) in &failures {
            eprintln!("failed: {name}: {msg}");
        }
        Err(CliError::Runtime(format!(
            "{} input file(s) could not be processed; see the manifest failure section",
            failures.len()
        )))
    }
}
