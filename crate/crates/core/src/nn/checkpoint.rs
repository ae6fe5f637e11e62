use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Leading bytes of every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FACNCKP1";

/// Checkpoint header: training position, reproducibility inputs, model
/// selector, and the blob directory. Serialized as JSON between the magic and
/// the raw tensor data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointManifest {
    pub version: u32,
    pub epoch: usize,
    /// Global step count (optimizer updates of the generator).
    pub step: usize,
    pub seed: u64,
    /// Hash of the canonicalized training configuration.
    pub config_hash: String,
    pub variant: String,
    pub k: usize,
    pub d: usize,
    pub hr_size: usize,
    pub adversarial: bool,
    /// Adam timestep, for exact optimizer-state resume.
    pub adam_t: u64,
    pub params: Vec<BlobInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlobInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// An on-disk model + optimizer snapshot: a manifest plus named 32-bit float
/// tensors (model parameters and, when present, Adam moments under
/// `adam.m.<param>` / `adam.v.<param>`).
///
/// Layout: magic, u64 little-endian manifest byte length, manifest JSON, then
/// each tensor's raw little-endian f32 data in manifest order.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub blobs: BTreeMap<String, ArrayD<f32>>,
}

impl Checkpoint {
    /// Writes the checkpoint; the manifest's blob directory is regenerated
    /// from the blob map so the two can never disagree.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut manifest = self.manifest.clone();
        manifest.params = self
            .blobs
            .iter()
            .map(|(name, arr)| BlobInfo { name: name.clone(), shape: arr.shape().to_vec() })
            .collect();
        let manifest_json =
            serde_json::to_vec(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            out.write_all(CHECKPOINT_MAGIC)?;
            out.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
            out.write_all(&manifest_json)?;
            for arr in self.blobs.values() {
                let mut bytes = Vec::with_capacity(arr.len() * 4);
                for &v in arr.iter() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                out.write_all(&bytes)?;
            }
            out.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);

        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let mut len_bytes = [0u8; 8];
        input.read_exact(&mut len_bytes).map_err(|e| Error::io(path, e))?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let mut manifest_json = vec![0u8; manifest_len];
        input.read_exact(&mut manifest_json).map_err(|e| Error::io(path, e))?;
        let manifest: CheckpointManifest = serde_json::from_slice(&manifest_json)
            .map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;

        let mut blobs = BTreeMap::new();
        for info in &manifest.params {
            let count: usize = info.shape.iter().product();
            let mut bytes = vec![0u8; count * 4];
            input.read_exact(&mut bytes).map_err(|e| {
                Error::Checkpoint(format!("truncated tensor '{}': {e}", info.name))
            })?;
            let values: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            let arr = ArrayD::from_shape_vec(IxDyn(&info.shape), values)
                .map_err(|e| Error::Checkpoint(format!("tensor '{}': {e}", info.name)))?;
            blobs.insert(info.name.clone(), arr);
        }
        Ok(Checkpoint { manifest, blobs })
    }
}

/// Hex SHA-256, used to fingerprint configurations in checkpoint manifests
/// and reports.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
