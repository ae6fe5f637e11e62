//! Training: deterministic counter-based RNG streams, Adam with decoupled
//! weight decay and the halving learning-rate schedule, flat key-value
//! configuration with environment overrides, dataset ingestion, the
//! PSNR/SSIM evaluation report, and the training loop with its
//! overfit/ablation harnesses.

pub mod adam;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod rng;
pub mod trainer;

pub use adam::{lr_schedule, Adam, AdamConfig};
pub use config::{env_name, parse_kv, TrainConfig, KNOWN_KEYS};
pub use dataset::{
    corpus_attr_path, prepare_hr, write_synthetic_corpus, Dataset, Sample, ATTRIBUTE_COUNT,
};
pub use eval::{
    bicubic_baseline, eval_spec, evaluate_dataset, evaluate_pairs, evaluate_staged,
    super_resolve, EvalReport, EvalRow, StagedImage,
};
pub use rng::{mix_seed, normal_noise, sample_seed, shuffle_indices, Draw};
pub use trainer::{
    ablation_csv, ablation_harness, overfit_harness, AblationCell, OverfitOutcome, StepRecord,
    Trainer,
};
