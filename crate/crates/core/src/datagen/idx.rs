use std::fs;
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses an IDX image/label pair (as used by MNIST), scaling bytes to `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad IDX magic {magic:#010x}")));
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad IDX magic {magic:#010x}")));
    }
    let n = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let n_labels = be_u32(labels, 4, "labels")? as usize;
    if n != n_labels {
        return Err(Error::Consistency(format!("{n} images but {n_labels} labels")));
    }
    let pixels = &images[16..];
    if pixels.len() != n * rows * cols {
        return Err(Error::Consistency(format!(
            "image payload has {} bytes, header implies {}",
            pixels.len(),
            n * rows * cols
        )));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != n {
        return Err(Error::Consistency(format!(
            "label payload has {} bytes, header implies {n}",
            label_bytes.len()
        )));
    }
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    Dataset::new(Tensor::new(vec![n, rows, cols], data)?, labels, n_classes, split)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?, split)
}
