use std::sync::OnceLock;

use piece_core::datagen::{make_glyphs, Dataset, GlyphParams, Split};
use piece_core::hurdle::{collect_latents, StatsTable, DEFAULT_ALPHA};
use piece_core::net::Network;
use piece_core::piece::{LatentModel, Models, PieceConfig};
use piece_core::training::{train_autoencoders, train_classifier, train_generator, AutoencoderSet, TrainConfig};

/// Trained toy models shared by the tests of one binary.
pub struct Toy {
    pub train: Dataset,
    pub test: Dataset,
    pub classifier: Network,
    pub generator: Network,
    pub stats: StatsTable,
}

impl Toy {
    pub fn latent(&self) -> LatentModel<'_> {
        LatentModel::new(&self.generator, &self.classifier).unwrap()
    }

    pub fn models(&self) -> Models<'_> {
        Models { latent: self.latent(), stats: &self.stats }
    }

    /// Training-set latents of the classifier, all classes pooled.
    pub fn train_latents(&self) -> Vec<Vec<f64>> {
        collect_latents(&self.classifier, &self.train).unwrap().per_class.into_iter().flatten().collect()
    }
}

pub fn toy() -> &'static Toy {
    static CELL: OnceLock<Toy> = OnceLock::new();
    CELL.get_or_init(|| {
        let train = make_glyphs(&GlyphParams::default(), 250, Split::Train).unwrap();
        let test = make_glyphs(&GlyphParams::default(), 250, Split::Test).unwrap();
        let (classifier, _) = train_classifier(&train, &test, &TrainConfig::classifier_default()).unwrap();
        let gen_cfg = TrainConfig { epochs: 50, ..TrainConfig::generator_default() };
        let (_, generator, _) = train_generator(&train, &test, &gen_cfg).unwrap();
        let partition = collect_latents(&classifier, &train).unwrap();
        let stats = StatsTable::fit(&partition, DEFAULT_ALPHA, &classifier.fingerprint(), &train.fingerprint()).unwrap();
        Toy { train, test, classifier, generator, stats }
    })
}

pub fn autoencoders() -> &'static AutoencoderSet {
    static CELL: OnceLock<AutoencoderSet> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = toy();
        train_autoencoders(&t.train, &t.test, &TrainConfig { epochs: 50, ..TrainConfig::autoencoder_default() }).unwrap()
    })
}

/// Settings with fewer inversion restarts, enough for property tests.
pub fn quick_config() -> PieceConfig {
    PieceConfig { restarts: 2, invert_steps: 300, ..PieceConfig::default() }
}

/// Test images the classifier gets right, then the ones it gets wrong.
pub fn split_by_correctness(t: &Toy) -> (Vec<usize>, Vec<usize>) {
    (0..t.test.len()).partition(|&i| {
        piece_core::tensor::argmax(&t.classifier.predict(t.test.image(i)).unwrap()) == t.test.labels[i]
    })
}
