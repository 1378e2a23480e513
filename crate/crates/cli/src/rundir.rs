use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use piece_core::datagen::{Dataset, DatasetManifest};
use piece_core::hurdle::StatsTable;
use piece_core::net::{read_network, Network};

use crate::error::{CliError, CliResult};

pub const DATASET_HASH_KEY: &str = "dataset_manifest";
pub const CONFIG_HASH_KEY: &str = "config";

/// On-disk layout of one run: `<runs>/<id>/{config.toml, dataset/, models/,
/// stats/, explanations/, reports/}`.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(runs_dir: &Path, run_id: &str) -> Self {
        Self { root: runs_dir.join(run_id) }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn dataset(&self, file: &str) -> PathBuf {
        self.root.join("dataset").join(file)
    }
    pub fn model(&self, file: &str) -> PathBuf {
        self.root.join("models").join(file)
    }
    pub fn stats(&self) -> PathBuf {
        self.root.join("stats").join("stats.json")
    }
    pub fn explanation_dir(&self, name: &str) -> PathBuf {
        self.root.join("explanations").join(name)
    }
    pub fn report(&self, file: &str) -> PathBuf {
        self.root.join("reports").join(file)
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.model("classifier.json")
    }
    pub fn generator_path(&self) -> PathBuf {
        self.model("generator.json")
    }
    pub fn class_autoencoder_path(&self, c: usize) -> PathBuf {
        self.model(&format!("autoencoder_class_{c}.json"))
    }
    pub fn full_autoencoder_path(&self) -> PathBuf {
        self.model("autoencoder_full.json")
    }

    pub fn ensure_dirs(&self) -> CliResult<()> {
        for d in ["dataset", "models", "stats", "explanations", "reports"] {
            std::fs::create_dir_all(self.root.join(d))?;
        }
        Ok(())
    }
}

/// Refuses to overwrite a finished stage unless forced.
pub fn guard_stage(outputs: &[PathBuf], force: bool, stage: &str) -> CliResult<()> {
    if !force {
        if let Some(p) = outputs.iter().find(|p| p.exists()) {
            return Err(CliError::Config(format!(
                "{stage} already produced {}; pass --force to redo it",
                p.display()
            )));
        }
    }
    Ok(())
}

fn require(path: &Path, command: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Prerequisite(format!("{} not found; run `piece {command}` first", path.display())))
    }
}

pub struct DatasetArtifacts {
    pub train: Dataset,
    pub test: Dataset,
    pub manifest: DatasetManifest,
    pub manifest_hash: String,
}

pub fn load_datasets(run: &RunDir) -> CliResult<DatasetArtifacts> {
    let manifest_path = run.dataset("manifest.json");
    require(&manifest_path, "datagen")?;
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    let train = Dataset::load(&run.dataset("train.json"))?;
    let test = Dataset::load(&run.dataset("test.json"))?;
    if train.fingerprint() != manifest.train_hash || test.fingerprint() != manifest.test_hash {
        return Err(CliError::Provenance("dataset files do not match their manifest".into()));
    }
    let manifest_hash = manifest.hash();
    Ok(DatasetArtifacts { train, test, manifest, manifest_hash })
}

pub fn provenance(manifest_hash: &str, config_hash: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        (DATASET_HASH_KEY.to_string(), manifest_hash.to_string()),
        (CONFIG_HASH_KEY.to_string(), config_hash.to_string()),
    ])
}

/// Loads a network and checks it was trained on the given dataset.
pub fn load_checked_network(path: &Path, manifest_hash: &str, command: &str) -> CliResult<Network> {
    require(path, command)?;
    let (net, prov) = read_network(path)?;
    match prov.get(DATASET_HASH_KEY) {
        Some(h) if h == manifest_hash => Ok(net),
        _ => Err(CliError::Provenance(format!(
            "{} was not trained on the current dataset; rerun `piece {command}`",
            path.display()
        ))),
    }
}

pub struct Artifacts {
    pub data: DatasetArtifacts,
    pub classifier: Network,
    pub generator: Network,
    pub autoencoders: Vec<Network>,
    pub full_autoencoder: Network,
    pub stats: StatsTable,
}

/// Loads everything explanations need and verifies the provenance chain.
pub fn load_artifacts(run: &RunDir) -> CliResult<Artifacts> {
    let data = load_datasets(run)?;
    let h = data.manifest_hash.clone();
    let classifier = load_checked_network(&run.classifier_path(), &h, "train")?;
    let generator = load_checked_network(&run.generator_path(), &h, "train")?;
    let autoencoders = (0..data.train.n_classes)
        .map(|c| load_checked_network(&run.class_autoencoder_path(c), &h, "train"))
        .collect::<CliResult<Vec<_>>>()?;
    let full_autoencoder = load_checked_network(&run.full_autoencoder_path(), &h, "train")?;
    require(&run.stats(), "fit-stats")?;
    let stats = StatsTable::load(&run.stats())?;
    stats
        .check_provenance(&classifier, &h)
        .map_err(|e| CliError::Provenance(format!("{e}; rerun `piece fit-stats`")))?;
    Ok(Artifacts { data, classifier, generator, autoencoders, full_autoencoder, stats })
}
