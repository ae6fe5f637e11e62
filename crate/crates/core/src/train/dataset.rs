//! Dataset loading: an attribute table (header row, then one row per image
//! with a filename and +/-1 attribute flags) next to a directory of images.
//! Both the plain two-line layout and the variant with a leading row-count
//! line are accepted; values may be separated by whitespace or commas.

use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{bicubic_resize, Image};
use crate::scalar::Scalar;
use crate::train::rng::mix_seed;

/// Number of attribute flags consumed per row; extra columns are ignored.
pub const ATTRIBUTE_COUNT: usize = 18;

/// One training example: HR image plus its attribute labels in `{0, 1}`.
#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub name: String,
    pub hr: Image<S>,
    pub attrs: Array1<S>,
}

/// An in-memory dataset of HR images with attribute labels, in table order.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    samples: Vec<Sample<S>>,
    hr_size: usize,
}

impl<S: Scalar> Dataset<S> {
    /// Load up to `limit` rows (0 = all) from `attr_path`, reading images
    /// relative to `dir` and normalizing them to `hr_size` x `hr_size`.
    pub fn load(dir: &Path, attr_path: &Path, hr_size: usize, limit: usize) -> Result<Self> {
        let text = std::fs::read_to_string(attr_path).map_err(|e| Error::io(attr_path, e))?;
        let mut rows = parse_attr_table(&text, attr_path)?;
        if limit > 0 && rows.len() > limit {
            rows.truncate(limit);
        }
        if rows.is_empty() {
            return Err(Error::Dataset(format!(
                "{}: no data rows",
                attr_path.display()
            )));
        }
        let samples = rows
            .into_iter()
            .map(|(name, attrs)| {
                let img = Image::load_png(&dir.join(&name))?;
                Ok(Sample {
                    hr: prepare_hr(&img, hr_size)?,
                    attrs: Array1::from_iter(attrs.into_iter().map(S::cast)),
                    name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { samples, hr_size })
    }

    pub fn from_samples(samples: Vec<Sample<S>>, hr_size: usize) -> Self {
        Dataset { samples, hr_size }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn hr_size(&self) -> usize {
        self.hr_size
    }

    pub fn get(&self, i: usize) -> &Sample<S> {
        &self.samples[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample<S>> {
        self.samples.iter()
    }
}

/// Normalize an image to `hr_size` square: pass through when already there,
/// otherwise center-crop to a square and bicubically resize (antialiased
/// when shrinking).
pub fn prepare_hr<S: Scalar>(img: &Image<S>, hr_size: usize) -> Result<Image<S>> {
    if img.channels() != 3 {
        return Err(Error::Dataset(format!(
            "expected a 3-channel image, got {} channels",
            img.channels()
        )));
    }
    let (h, w) = (img.height(), img.width());
    if h == hr_size && w == hr_size {
        return Ok(img.clone());
    }
    let side = h.min(w);
    let y0 = (h - side) / 2;
    let x0 = (w - side) / 2;
    let cropped = Image::from_fn(side, side, 3, |y, x, c| img.get(y0 + y, x0 + x, c));
    if side == hr_size {
        return Ok(cropped);
    }
    bicubic_resize(&cropped, hr_size, hr_size, true)
}

fn parse_attr_table(text: &str, path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Dataset(format!("{}: empty attribute table", path.display())))?;
    // A leading pure-integer line is a row count; the header follows it.
    if first.parse::<usize>().is_ok() {
        lines.next().ok_or_else(|| {
            Error::Dataset(format!("{}: missing header after row count", path.display()))
        })?;
    }

    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let tokens: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.len() < 1 + ATTRIBUTE_COUNT {
            return Err(Error::Dataset(format!(
                "{} line {lineno}: expected a filename and at least {ATTRIBUTE_COUNT} flags, got {} fields",
                path.display(),
                tokens.len()
            )));
        }
        let name = tokens[0].to_string();
        let attrs = tokens[1..=ATTRIBUTE_COUNT]
            .iter()
            .map(|t| match t.parse::<i32>() {
                Ok(1) => Ok(1.0),
                Ok(-1) => Ok(0.0),
                _ => Err(Error::Dataset(format!(
                    "{} line {lineno} ('{name}'): attribute flag must be 1 or -1, got '{t}'",
                    path.display()
                ))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((name, attrs));
    }
    Ok(rows)
}

/// Write a deterministic synthetic dataset: `n` sharp-edged procedural
/// images plus a matching attribute table, for harnesses and smoke tests.
/// Returns the image filenames in table order.
pub fn write_synthetic_corpus(
    dir: &Path,
    n: usize,
    hr_size: usize,
    seed: u64,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut table = String::from("name");
    for i in 0..ATTRIBUTE_COUNT {
        table.push_str(&format!(" attr{i:02}"));
    }
    table.push('\n');

    let mut names = Vec::with_capacity(n);
    for i in 0..n {
        let name = format!("img_{i:03}.png");
        let img = Image::<f32>::synthetic_sharp(hr_size, hr_size, mix_seed(&[seed, i as u64]));
        img.save_png(&dir.join(&name))?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, i as u64, 1]));
        table.push_str(&name);
        for _ in 0..ATTRIBUTE_COUNT {
            table.push_str(if rng.random_bool(0.5) { " 1" } else { " -1" });
        }
        table.push('\n');
        names.push(name);
    }
    let attr_path = dir.join("attributes.txt");
    std::fs::write(&attr_path, table).map_err(|e| Error::io(&attr_path, e))?;
    Ok(names)
}

/// Destination for the synthetic table inside a corpus directory.
pub fn corpus_attr_path(dir: &Path) -> PathBuf {
    dir.join("attributes.txt")
}
