use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::NeuronClassModel;
use crate::datagen::Dataset;
use crate::net::Network;
use crate::tensor::argmax;
use crate::{Error, Result};

const MAGIC: &str = "piece-stats";
const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Layer-X activations grouped by the classifier's own prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPartition {
    pub n_features: usize,
    /// `per_class[c]` holds one feature vector per image predicted as `c`.
    pub per_class: Vec<Vec<Vec<f64>>>,
}

impl LatentPartition {
    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }

    pub fn empty_classes(&self) -> Vec<usize> {
        (0..self.n_classes()).filter(|&c| self.per_class[c].is_empty()).collect()
    }

    /// Activations of one neuron across a class.
    pub fn column(&self, class: usize, neuron: usize) -> Vec<f64> {
        self.per_class[class].iter().map(|row| row[neuron]).collect()
    }
}

pub fn collect_latents(classifier: &Network, data: &Dataset) -> Result<LatentPartition> {
    let n_features = classifier
        .feature_dim()
        .ok_or_else(|| Error::InvalidParameter("network has no feature tap".into()))?;
    let n_classes = classifier.output_dim();
    let rows: Vec<(usize, Vec<f64>)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = classifier.features(data.image(i))?;
            let probs = classifier.head_probs(&x)?;
            Ok((argmax(&probs), x))
        })
        .collect::<Result<_>>()?;
    let mut per_class = vec![Vec::new(); n_classes];
    for (c, x) in rows {
        per_class[c].push(x);
    }
    Ok(LatentPartition { n_features, per_class })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub alpha: f64,
    pub classifier_hash: String,
    pub dataset_hash: String,
    pub n_features: usize,
    /// `models[c][i]`: neuron `i` within class `c`.
    pub models: Vec<Vec<NeuronClassModel>>,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    magic: String,
    format_version: u32,
    #[serde(flatten)]
    table: StatsTable,
}

impl StatsTable {
    pub fn fit(partition: &LatentPartition, alpha: f64, classifier_hash: &str, dataset_hash: &str) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 0.5), got {alpha}")));
        }
        let n = partition.n_features;
        let flat: Vec<NeuronClassModel> = (0..partition.n_classes() * n)
            .into_par_iter()
            .map(|k| NeuronClassModel::fit(&partition.column(k / n, k % n)))
            .collect();
        let models = flat.chunks(n.max(1)).map(<[_]>::to_vec).collect();
        Ok(StatsTable {
            alpha,
            classifier_hash: classifier_hash.to_string(),
            dataset_hash: dataset_hash.to_string(),
            n_features: n,
            models,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.models.len()
    }

    pub fn class(&self, c: usize) -> Result<&[NeuronClassModel]> {
        self.models
            .get(c)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Range(format!("class {c} not in stats table of {}", self.n_classes())))
    }

    /// Check that the table was fitted for this classifier and dataset.
    pub fn check_provenance(&self, classifier: &Network, dataset_hash: &str) -> Result<()> {
        if self.classifier_hash != classifier.fingerprint() {
            return Err(Error::Consistency("stats table was fitted for a different classifier".into()));
        }
        if self.dataset_hash != dataset_hash {
            return Err(Error::Consistency("stats table was fitted on a different dataset".into()));
        }
        if self.n_classes() != classifier.output_dim() || Some(self.n_features) != classifier.feature_dim() {
            return Err(Error::Consistency("stats table shape does not match classifier".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = StatsFile { magic: MAGIC.into(), format_version: FORMAT_VERSION, table: self.clone() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: StatsFile = serde_json::from_str(s)?;
        if file.magic != MAGIC {
            return Err(Error::Format(format!("bad stats magic {:?}", file.magic)));
        }
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported stats version {}", file.format_version)));
        }
        let t = file.table;
        if t.models.iter().any(|row| row.len() != t.n_features) {
            return Err(Error::Consistency("stats table rows disagree with feature count".into()));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
