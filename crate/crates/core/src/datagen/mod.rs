//! Toy image datasets: procedural glyphs, IDX ingestion, PGM output.

mod glyphs;
mod idx;
mod pgm;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{decode_f64s, encode_f64s};
use crate::tensor::Tensor;

pub use glyphs::{make_glyphs, GlyphParams, ShapeFamily};
pub use idx::{load_idx, parse_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use pgm::{read_pgm, write_pgm, encode_pgm, decode_pgm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Grayscale images `[n, H, W]` in `[0, 1]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, n_classes: usize, split: Split) -> Result<Self> {
        if images.shape().len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "dataset images must be [n, H, W], got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Range(format!("label {l} outside [0, {n_classes})")));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range("image values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.images.shape()[2]
    }

    pub fn pixels(&self) -> usize {
        self.height() * self.width()
    }

    /// Flattened pixels of image `i`.
    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    pub fn image_tensor(&self, i: usize) -> Tensor {
        Tensor::new(vec![self.height(), self.width()], self.image(i).to_vec())
            .expect("row has H*W elements")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of images carrying `label`.
    pub fn indices_of(&self, label: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// New dataset holding the given images in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(indices.len() * self.pixels());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Dataset {
            images: Tensor::new(vec![indices.len(), self.height(), self.width()], data)
                .expect("consistent subset"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            split: self.split,
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in self.images.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in self.images.data() {
            h.update(v.to_le_bytes());
        }
        for l in &self.labels {
            h.update((*l as u64).to_le_bytes());
        }
        h.update((self.n_classes as u64).to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = DatasetDoc {
            magic: DATASET_MAGIC.into(),
            split: self.split,
            n_classes: self.n_classes,
            shape: self.images.shape().to_vec(),
            labels: self.labels.clone(),
            images: encode_f64s(self.images.data()),
        };
        fs::write(path, serde_json::to_string(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Format(format!("malformed dataset file: {e}")))?;
        if doc.magic != DATASET_MAGIC {
            return Err(Error::Format(format!("bad dataset magic {:?}", doc.magic)));
        }
        let data = decode_f64s(&doc.images, "dataset images")?;
        Dataset::new(Tensor::new(doc.shape, data)?, doc.labels, doc.n_classes, doc.split)
    }
}

const DATASET_MAGIC: &str = "piece-dataset-v1";

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    magic: String,
    split: Split,
    n_classes: usize,
    shape: Vec<usize>,
    labels: Vec<usize>,
    images: String,
}

/// Provenance record written alongside generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub params: GlyphParams,
    pub n_per_class_train: usize,
    pub n_per_class_test: usize,
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub train_hash: String,
    pub test_hash: String,
}

impl DatasetManifest {
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("manifest serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
