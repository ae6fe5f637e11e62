//! Training configuration: a flat `key = value` file with `#` comment
//! lines, dotted keys, and environment overrides (`FACN_TRAIN_LR` overrides
//! `train.lr`, i.e. `FACN_` plus the key uppercased with dots replaced by
//! underscores). Unknown keys are rejected by name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{DegradationKind, DegradationSpec};
use crate::model::{ModelConfig, ModelVariant};
use crate::nn::sha256_hex;

/// Every key the config file accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "dataset.dir",
    "dataset.attributes",
    "dataset.limit",
    "model.hr_size",
    "model.scale",
    "model.k",
    "model.d",
    "model.variant",
    "model.supervised_attrs",
    "degradation.kind",
    "degradation.noise",
    "degradation.blur_size",
    "degradation.blur_sigma",
    "train.epochs",
    "train.batch",
    "train.lr",
    "train.weight_decay",
    "train.seed",
    "train.checkpoint_every",
    "adversarial.enabled",
    "adversarial.gamma_adv",
    "adversarial.gamma_perc",
    "out.dir",
];

/// Environment variable that overrides the given key.
pub fn env_name(key: &str) -> String {
    format!("FACN_{}", key.to_uppercase().replace('.', "_"))
}

/// Parse `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; duplicate keys and lines without `=` are errors.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!(
                "line {}: empty key or value in '{line}'",
                lineno + 1
            )));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Resolved training configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dataset_dir: PathBuf,
    /// Attribute table path; defaults to `<dataset.dir>/attributes.txt`.
    pub attributes: PathBuf,
    /// Use at most this many dataset rows (0 = all).
    pub limit: usize,
    pub model: ModelConfig,
    pub degradation_kind: DegradationKind,
    pub noise_level: f64,
    pub blur_size: usize,
    pub blur_sigma: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub adversarial: bool,
    pub gamma_adv: f64,
    pub gamma_perc: f64,
    pub out_dir: PathBuf,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse value '{value}'")))
}

fn take<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        Some(v) => parse_value(key, v),
        None => Ok(default),
    }
}

impl TrainConfig {
    /// Build from parsed keys plus an environment lookup. Environment values
    /// take precedence; unknown file keys are rejected by name.
    pub fn from_map_with_env(
        mut map: BTreeMap<String, String>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key '{key}'")));
            }
        }
        for &key in KNOWN_KEYS {
            if let Some(value) = env(&env_name(key)) {
                map.insert(key.to_string(), value);
            }
        }

        let dataset_dir: PathBuf = map
            .get("dataset.dir")
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config("missing required key 'dataset.dir'".to_string()))?;
        let attributes = map
            .get("dataset.attributes")
            .map(PathBuf::from)
            .unwrap_or_else(|| dataset_dir.join("attributes.txt"));

        let variant: ModelVariant = take(&map, "model.variant", ModelVariant::Full)?;
        let model = ModelConfig {
            hr_size: take(&map, "model.hr_size", 128)?,
            scale: take(&map, "model.scale", 8)?,
            k: take(&map, "model.k", 64)?,
            d: take(&map, "model.d", 4)?,
            variant,
            supervised_attrs: take(&map, "model.supervised_attrs", 18)?,
        };

        let degradation_kind: DegradationKind = take(&map, "degradation.kind", DegradationKind::BicN)?;
        let default_noise = match degradation_kind {
            DegradationKind::Bic => 0.0,
            DegradationKind::BicN => 10.0,
            DegradationKind::BBicN => 30.0,
        };

        let cfg = TrainConfig {
            dataset_dir,
            attributes,
            limit: take(&map, "dataset.limit", 200)?,
            model,
            degradation_kind,
            noise_level: take(&map, "degradation.noise", default_noise)?,
            blur_size: take(&map, "degradation.blur_size", 7)?,
            blur_sigma: take(&map, "degradation.blur_sigma", 1.6)?,
            epochs: take(&map, "train.epochs", 60)?,
            batch: take(&map, "train.batch", 16)?,
            lr: take(&map, "train.lr", 3e-4)?,
            weight_decay: take(&map, "train.weight_decay", 1e-4)?,
            seed: take(&map, "train.seed", 0)?,
            checkpoint_every: take(&map, "train.checkpoint_every", 1)?,
            adversarial: take(&map, "adversarial.enabled", false)?,
            gamma_adv: take(&map, "adversarial.gamma_adv", 0.01)?,
            gamma_perc: take(&map, "adversarial.gamma_perc", 0.01)?,
            out_dir: map
                .get("out.dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file, applying process-environment overrides.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Parse config text, applying process-environment overrides.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map_with_env(parse_kv(text)?, |name| std::env::var(name).ok())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.degradation_spec(0).validate()?;
        if self.batch == 0 {
            return Err(Error::Config("key 'train.batch': must be positive".to_string()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config(
                "key 'train.checkpoint_every': must be positive".to_string(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "key 'train.lr': must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("key 'train.weight_decay': must be >= 0".to_string()));
        }
        Ok(())
    }

    /// The degradation this run trains against, with the given noise seed.
    pub fn degradation_spec(&self, seed: u64) -> DegradationSpec {
        let mut spec = DegradationSpec::new(self.degradation_kind, self.model.scale, seed);
        spec.noise_level = match self.degradation_kind {
            DegradationKind::Bic => 0.0,
            _ => self.noise_level,
        };
        if self.degradation_kind == DegradationKind::BBicN {
            spec.blur_size = self.blur_size;
            spec.blur_sigma = self.blur_sigma;
        }
        spec
    }

    /// Canonical listing of every key with its effective value.
    pub fn to_canonical_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        put("dataset.dir", self.dataset_dir.display().to_string());
        put("dataset.attributes", self.attributes.display().to_string());
        put("dataset.limit", self.limit.to_string());
        put("model.hr_size", self.model.hr_size.to_string());
        put("model.scale", self.model.scale.to_string());
        put("model.k", self.model.k.to_string());
        put("model.d", self.model.d.to_string());
        put("model.variant", self.model.variant.to_string());
        put("model.supervised_attrs", self.model.supervised_attrs.to_string());
        put("degradation.kind", self.degradation_kind.to_string());
        put("degradation.noise", self.noise_level.to_string());
        put("degradation.blur_size", self.blur_size.to_string());
        put("degradation.blur_sigma", self.blur_sigma.to_string());
        put("train.epochs", self.epochs.to_string());
        put("train.batch", self.batch.to_string());
        put("train.lr", self.lr.to_string());
        put("train.weight_decay", self.weight_decay.to_string());
        put("train.seed", self.seed.to_string());
        put("train.checkpoint_every", self.checkpoint_every.to_string());
        put("adversarial.enabled", self.adversarial.to_string());
        put("adversarial.gamma_adv", self.gamma_adv.to_string());
        put("adversarial.gamma_perc", self.gamma_perc.to_string());
        put("out.dir", self.out_dir.display().to_string());
        map
    }

    /// Hash of the training-relevant configuration (everything except the
    /// output directory), recorded in checkpoints so a resume can detect a
    /// changed setup.
    pub fn hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.to_canonical_map() {
            if k == "out.dir" {
                continue;
            }
            text.push_str(&format!("{k}={v}\n"));
        }
        sha256_hex(text.as_bytes())
    }
}
