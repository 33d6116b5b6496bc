//! IDX files (the MNIST container format).
//!
//! Big-endian. Images: magic `0x00000803`, `u32` count, rows, cols, then
//! `count·rows·cols` unsigned bytes. Labels: magic `0x00000801`, `u32` count,
//! then `count` bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{DatasetMeta, LabeledDataset, SourceTag};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::Format(format!(
                "{what}: file truncated in header ({} bytes)",
                bytes.len()
            ))
        })
}

fn parse_images(bytes: &[u8], what: &str) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{what}: bad image magic {magic:#010x} (expected {IMAGE_MAGIC:#010x})"
        )));
    }
    let count = be_u32(bytes, 4, what)? as usize;
    let rows = be_u32(bytes, 8, what)? as usize;
    let cols = be_u32(bytes, 12, what)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "{what}: length {} does not match header ({need} bytes expected)",
            bytes.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

fn parse_labels(bytes: &[u8], what: &str) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{what}: bad label magic {magic:#010x} (expected {LABEL_MAGIC:#010x})"
        )));
    }
    let count = be_u32(bytes, 4, what)? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::Format(format!(
            "{what}: length {} does not match header ({} bytes expected)",
            bytes.len(),
            8 + count
        )));
    }
    Ok(bytes[8..].to_vec())
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    parse_images(&fs::read(path)?, &path.display().to_string())
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_labels(&fs::read(path)?, &path.display().to_string())
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}

/// Loads an image/label pair, scaling pixels to `[0, 1]` by `/ 255`.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<LabeledDataset> {
    let images = read_idx_images(image_path)?;
    let labels = read_idx_labels(label_path)?;
    if images.count != labels.len() {
        return Err(Error::Invalid(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let d = images.rows * images.cols;
    let data = images.pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(10, |m| (m + 1).max(10));
    LabeledDataset::new(
        Tensor::new(vec![images.count, d], data)?,
        labels,
        num_classes,
        DatasetMeta {
            source: SourceTag::IdxFile,
            side: images.cols,
            seed: None,
        },
    )
}

#[derive(Serialize)]
struct Sidecar<'a> {
    source: SourceTag,
    seed: Option<u64>,
    side: usize,
    count: usize,
    num_classes: usize,
    images: &'a str,
    labels: &'a str,
}

/// Writes `<name>-images.idx`, `<name>-labels.idx` and `<name>.json` into `dir`.
pub fn export_dataset(dir: &Path, name: &str, ds: &LabeledDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let side = ds.meta.side;
    if side == 0 || !ds.dim().is_multiple_of(side) {
        return Err(Error::Invalid(format!(
            "dimension {} is not a multiple of side {side}",
            ds.dim()
        )));
    }
    if ds.num_classes > 256 {
        return Err(Error::Invalid("IDX labels hold at most 256 classes".into()));
    }
    let pixels = ds
        .images
        .data()
        .iter()
        .map(|&p| (p * 255.0).round() as u8)
        .collect();
    let image_file = format!("{name}-images.idx");
    let label_file = format!("{name}-labels.idx");
    write_idx_images(
        &dir.join(&image_file),
        &IdxImages {
            count: ds.len(),
            rows: ds.dim() / side,
            cols: side,
            pixels,
        },
    )?;
    let labels: Vec<u8> = ds.labels.iter().map(|&y| y as u8).collect();
    write_idx_labels(&dir.join(&label_file), &labels)?;
    let sidecar = Sidecar {
        source: ds.meta.source,
        seed: ds.meta.seed,
        side,
        count: ds.len(),
        num_classes: ds.num_classes,
        images: &image_file,
        labels: &label_file,
    };
    fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}
