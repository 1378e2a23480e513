use std::path::Path;

use piece_core::datagen::GlyphParams;
use piece_core::piece::PieceConfig;
use piece_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub glyphs: GlyphParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinesConfig {
    pub lr: f64,
    pub max_steps: usize,
    /// Weight of the class term in the constrained variant.
    pub lambda: f64,
    /// Extra weights evaluated in experiment 1 and reported separately.
    pub lambda_sweep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Confidently correct test images drawn from each class.
    pub correct_per_class: usize,
    /// Correct test images whose top probability is below `close_threshold`.
    pub close_correct: usize,
    pub close_threshold: f64,
    /// Optional cap on misclassified test images; all are used when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_misclassified: Option<usize>,
    pub seed: u64,
    /// Fraction of failed rows above which an experiment exits with code 5.
    pub max_failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub mc_passes: usize,
    pub knn_k: usize,
    /// Second neighbour count reported alongside `knn_k`.
    pub knn_k_alt: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub dataset: DatasetConfig,
    pub classifier: TrainConfig,
    pub generator: TrainConfig,
    pub autoencoder: TrainConfig,
    pub stats: StatsConfig,
    pub piece: PieceConfig,
    pub baselines: BaselinesConfig,
    pub benchmark: BenchmarkConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "toy".into(),
            dataset: DatasetConfig { train_per_class: 250, test_per_class: 250, glyphs: GlyphParams::default() },
            classifier: TrainConfig::classifier_default(),
            generator: TrainConfig { epochs: 50, ..TrainConfig::generator_default() },
            autoencoder: TrainConfig { epochs: 50, ..TrainConfig::autoencoder_default() },
            stats: StatsConfig { alpha: 0.05 },
            piece: PieceConfig::default(),
            baselines: BaselinesConfig { lr: 0.02, max_steps: 2000, lambda: 1.0, lambda_sweep: vec![10.0, 100.0, 1000.0] },
            benchmark: BenchmarkConfig {
                correct_per_class: 10,
                close_correct: 10,
                close_threshold: 0.8,
                max_misclassified: None,
                seed: 5,
                max_failure_rate: 0.5,
            },
            metrics: MetricsConfig { mc_passes: 1000, knn_k: 1, knn_k_alt: 3, seed: 17 },
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Parses a TOML document; keys it omits keep their defaults.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let over: toml::Value = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut base = toml::Value::try_from(RunConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, over);
        let cfg: RunConfig = base.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.run_id.is_empty() || !self.run_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad(format!("run_id {:?} must be non-empty and use [A-Za-z0-9._-]", self.run_id));
        }
        if self.dataset.train_per_class == 0 || self.dataset.test_per_class == 0 {
            return bad("dataset sizes must be positive".into());
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 0.5) {
            return bad(format!("stats.alpha must lie in (0, 0.5), got {}", self.stats.alpha));
        }
        self.piece.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.baselines.lambda > 0.0) || self.baselines.lambda_sweep.iter().any(|l| !(*l > 0.0)) {
            return bad("baseline lambdas must be positive".into());
        }
        if self.metrics.mc_passes == 0 || self.metrics.knn_k == 0 || self.metrics.knn_k_alt == 0 {
            return bad("mc_passes and k must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.benchmark.max_failure_rate) || !(0.0..=1.0).contains(&self.benchmark.close_threshold) {
            return bad("benchmark rates must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Hash of a serialisable config section, used to tie artifacts to the
    /// settings that produced them.
    pub fn section_hash<T: Serialize>(section: &T) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(section).expect("section serializes").as_bytes()))
    }
}
