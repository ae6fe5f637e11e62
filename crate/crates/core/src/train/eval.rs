//! Evaluation: per-image Y-channel PSNR/SSIM for the model and for the
//! bicubic-upsampling baseline, with aggregate means. Network forwards run
//! sequentially (layer caches are single-slot); metric computation is
//! parallelized per image with row order following input order.

use ndarray::Array3;
use rayon::prelude::*;

use crate::error::Result;
use crate::image::{bicubic_resize, degrade, psnr, ssim, DegradationSpec, Image};
use crate::model::Facn;
use crate::scalar::Scalar;
use crate::train::dataset::Dataset;
use crate::train::rng::{sample_seed, Draw};

/// Metrics for one image: model output and bicubic baseline, both against HR.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_bicubic: f64,
    pub ssim_bicubic: f64,
}

/// Rows in input order plus their arithmetic means.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_psnr_bicubic: f64,
    pub mean_ssim_bicubic: f64,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        EvalReport {
            mean_psnr: mean(|r| r.psnr),
            mean_ssim: mean(|r| r.ssim),
            mean_psnr_bicubic: mean(|r| r.psnr_bicubic),
            mean_ssim_bicubic: mean(|r| r.ssim_bicubic),
            rows,
        }
    }

    /// CSV rendering: `#`-prefixed header block, one row per image, and a
    /// final `mean` row.
    pub fn to_csv(&self, context: &[String]) -> String {
        let mut out = String::new();
        for line in context {
            out.push_str(&format!("# {line}\n"));
        }
        out.push_str("# columns: name,psnr,ssim,psnr_bicubic,ssim_bicubic\n");
        out.push_str("name,psnr,ssim,psnr_bicubic,ssim_bicubic\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.name, r.psnr, r.ssim, r.psnr_bicubic, r.ssim_bicubic
            ));
        }
        out.push_str(&format!(
            "mean,{:.6},{:.6},{:.6},{:.6}\n",
            self.mean_psnr, self.mean_ssim, self.mean_psnr_bicubic, self.mean_ssim_bicubic
        ));
        out
    }
}

/// Run the model on one LR image in deterministic mode (reparameterization
/// noise zeroed). The output is clamped and snapped to the 8-bit grid, so
/// metrics match what a saved PNG of the output would score.
pub fn super_resolve<S: Scalar>(model: &mut Facn<S>, lr: &Image<S>) -> Result<Image<S>> {
    let fwd = model.forward(lr, None)?;
    chw_to_unit_image(&fwd.y_hat)
}

/// Plain bicubic upsampling of the LR input — the comparison baseline,
/// quantized the same way as the model output.
pub fn bicubic_baseline<S: Scalar>(lr: &Image<S>, hr_size: usize) -> Result<Image<S>> {
    let mut up = bicubic_resize(lr, hr_size, hr_size, false)?;
    up.quantize_unit_u8();
    Ok(up)
}

fn chw_to_unit_image<S: Scalar>(chw: &Array3<S>) -> Result<Image<S>> {
    let mut img = Image::from_chw(chw)?;
    img.quantize_unit_u8();
    Ok(img)
}

fn metric_row<S: Scalar>(
    name: &str,
    hr: &Image<S>,
    sr: &Image<S>,
    baseline: &Image<S>,
) -> Result<EvalRow> {
    Ok(EvalRow {
        name: name.to_string(),
        psnr: psnr(hr, sr)?,
        ssim: ssim(hr, sr)?,
        psnr_bicubic: psnr(hr, baseline)?,
        ssim_bicubic: ssim(hr, baseline)?,
    })
}

/// One image's evaluation inputs and outputs, staged for metric computation.
pub struct StagedImage<S: Scalar> {
    pub name: String,
    pub hr: Image<S>,
    pub sr: Image<S>,
    pub baseline: Image<S>,
}

/// Score already-computed outputs. Metric rows are computed in parallel but
/// reported in input order.
pub fn evaluate_staged<S: Scalar>(staged: &[StagedImage<S>]) -> Result<EvalReport> {
    let rows = staged
        .par_iter()
        .map(|s| metric_row(&s.name, &s.hr, &s.sr, &s.baseline))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// Evaluate named `(lr, hr)` pairs in order.
pub fn evaluate_pairs<S: Scalar>(
    model: &mut Facn<S>,
    pairs: &[(String, Image<S>, Image<S>)],
) -> Result<EvalReport> {
    let hr_size = model.config().hr_size;
    let mut staged = Vec::with_capacity(pairs.len());
    for (name, lr, hr) in pairs {
        staged.push(StagedImage {
            name: name.clone(),
            hr: hr.clone(),
            sr: super_resolve(model, lr)?,
            baseline: bicubic_baseline(lr, hr_size)?,
        });
    }
    evaluate_staged(&staged)
}

/// The degradation spec for evaluation of sample `index`: same pipeline as
/// `base` but with a fixed per-sample seed, so evaluation LR images are
/// stable across epochs and reruns.
pub fn eval_spec(base: &DegradationSpec, master_seed: u64, index: usize) -> DegradationSpec {
    let mut spec = *base;
    spec.seed = sample_seed(master_seed, 0, 0, index as u64, Draw::EvalDegrade);
    spec
}

/// Degrade every dataset image with its fixed evaluation seed and score the
/// model against the bicubic baseline.
pub fn evaluate_dataset<S: Scalar>(
    model: &mut Facn<S>,
    ds: &Dataset<S>,
    base_spec: &DegradationSpec,
    master_seed: u64,
) -> Result<EvalReport> {
    let pairs = ds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let lr = degrade(&s.hr, &eval_spec(base_spec, master_seed, i))?;
            Ok((s.name.clone(), lr, s.hr.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_pairs(model, &pairs)
}
