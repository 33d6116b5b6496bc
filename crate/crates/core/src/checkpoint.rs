//! Model checkpoints: `<name>.json` manifest plus `<name>.bin` blob.
//!
//! The blob is the little-endian `f64` data of every tensor concatenated in
//! manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub shapes: Vec<Vec<usize>>,
    pub tensor_names: Vec<String>,
    pub dtype: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.json"))
}

pub fn blob_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.bin"))
}

pub fn save(
    dir: &Path,
    name: &str,
    tensors: &[(String, &Tensor)],
    seed: u64,
    config: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        name: name.to_string(),
        shapes: tensors.iter().map(|(_, t)| t.shape().to_vec()).collect(),
        tensor_names: tensors.iter().map(|(n, _)| n.clone()).collect(),
        dtype: "f64".into(),
        seed,
        config,
    };
    let mut blob = Vec::with_capacity(tensors.iter().map(|(_, t)| 8 * t.numel()).sum());
    for (_, t) in tensors {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(
        manifest_path(dir, name),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    fs::write(blob_path(dir, name), blob)?;
    Ok(())
}

pub fn load(dir: &Path, name: &str) -> Result<(Manifest, Vec<Tensor>)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path(dir, name))?)?;
    if manifest.dtype != "f64" {
        return Err(Error::Format(format!(
            "unsupported dtype {}",
            manifest.dtype
        )));
    }
    let blob = fs::read(blob_path(dir, name))?;
    let total: usize = manifest
        .shapes
        .iter()
        .map(|s| s.iter().product::<usize>())
        .sum();
    if blob.len() != 8 * total {
        return Err(Error::Format(format!(
            "checkpoint blob has {} bytes, manifest needs {}",
            blob.len(),
            8 * total
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let tensors = manifest
        .shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s.clone(), values.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, tensors))
}
