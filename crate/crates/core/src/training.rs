//! Trains the classifier, the generator, and the autoencoders used for the
//! reconstruction-based plausibility scores.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::net::{
    loss_slice, one_hot, AdamConfig, Dense, DenseGrad, Layer, LossKind, Mode, Network,
    NetworkAdam, Role,
};
use crate::tensor::argmax;

/// Minimum test accuracy a classifier must reach.
pub const MIN_CLASSIFIER_ACCURACY: f64 = 0.85;
/// Maximum per-pixel test MSE accepted for the generator.
pub const MAX_GENERATOR_MSE: f64 = 0.01;
/// Fewest images per class an autoencoder is trained on.
pub const MIN_AE_SAMPLES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub dropout: f64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Stop once this metric is reached: test accuracy for classifiers, test
    /// MSE for reconstruction models.
    pub early_stop: Option<f64>,
}

impl TrainConfig {
    pub fn classifier_default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            dropout: 0.25,
            latent_dim: 8,
            hidden: vec![64, 32],
            seed: 11,
            early_stop: Some(0.995),
        }
    }

    pub fn generator_default() -> Self {
        Self {
            epochs: 120,
            batch_size: 16,
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            dropout: 0.0,
            latent_dim: 8,
            hidden: vec![128],
            seed: 23,
            early_stop: None,
        }
    }

    pub fn autoencoder_default() -> Self {
        Self {
            epochs: 80,
            batch_size: 16,
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            dropout: 0.0,
            latent_dim: 8,
            hidden: vec![64],
            seed: 31,
            early_stop: None,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    fn validate(&self, pixels: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden.is_empty() {
            return Err(Error::InvalidParameter(
                "epochs, batch size and hidden widths must be positive".into(),
            ));
        }
        if self.hidden.iter().any(|&h| h == 0) || self.latent_dim == 0 {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        if self.latent_dim >= pixels {
            return Err(Error::InvalidParameter(format!(
                "latent dimension {} must be below the pixel count {pixels}",
                self.latent_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.lr < 0.0 {
            return Err(Error::InvalidParameter("dropout must be in [0, 1), lr >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Test accuracy (classifier) or test per-pixel MSE (reconstruction).
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub config: TrainConfig,
    pub curve: Vec<EpochRecord>,
    pub final_metric: f64,
    pub metric_name: String,
    pub train_samples: usize,
    pub dataset_hash: String,
}

fn shuffled(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64));
    order.shuffle(&mut rng);
    order
}

fn scale_grads(grads: &mut [Option<DenseGrad>], factor: f64) {
    for g in grads.iter_mut().flatten() {
        g.weight.iter_mut().for_each(|x| *x *= factor);
        g.bias.iter_mut().for_each(|x| *x *= factor);
    }
}

fn dropout_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    seed ^ ((epoch as u64) << 32) ^ (position as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn classifier_accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    let mut correct = 0;
    for i in 0..data.len() {
        if argmax(&net.predict(data.image(i))?) == data.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Dense→ReLU→Dropout→Dense→ReLU(layer X)→Dense→SoftMax.
pub fn build_classifier(pixels: usize, n_classes: usize, cfg: &TrainConfig) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h1 = cfg.hidden[0];
    let h2 = *cfg.hidden.get(1).unwrap_or(&h1);
    let layers = vec![
        Layer::Dense(Dense::glorot(pixels, h1, &mut rng)),
        Layer::Relu,
        Layer::Dropout { rate: cfg.dropout },
        Layer::Dense(Dense::glorot(h1, h2, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::glorot(h2, n_classes, &mut rng)),
        Layer::Softmax,
    ];
    Network::new(Role::Classifier, layers, Some(4))
}

pub fn train_classifier(
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if train.n_classes < 2 {
        return Err(Error::InvalidParameter("classifier needs at least 2 classes".into()));
    }
    cfg.validate(train.pixels())?;
    let mut net = build_classifier(train.pixels(), train.n_classes, cfg)?;
    let mut opt = NetworkAdam::new(&net, cfg.adam());
    let mut curve = Vec::new();

    for epoch in 0..cfg.epochs {
        let order = shuffled(train.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = net.zero_grads();
            for (k, &i) in batch.iter().enumerate() {
                let seed = dropout_seed(cfg.seed, epoch, b * cfg.batch_size + k);
                let trace = net.forward_span(0..net.layers().len(), train.image(i), Mode::Train, Some(seed))?;
                let target = one_hot(train.labels[i], train.n_classes);
                let (l, g) = loss_slice(LossKind::CrossEntropy, trace.output().data(), &target)?;
                epoch_loss += l;
                net.backward_into(&trace, &g, &mut acc)?;
            }
            scale_grads(&mut acc, 1.0 / batch.len() as f64);
            opt.step(&mut net, &acc)?;
        }
        let test_acc = classifier_accuracy(&net, test)?;
        curve.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            test_metric: test_acc,
        });
        if cfg.early_stop.is_some_and(|target| test_acc >= target) {
            break;
        }
    }

    let final_metric = curve.last().map(|r| r.test_metric).unwrap_or(0.0);
    if final_metric < MIN_CLASSIFIER_ACCURACY {
        return Err(Error::TrainingFailure {
            reason: format!(
                "classifier reached test accuracy {final_metric:.4}, below {MIN_CLASSIFIER_ACCURACY}"
            ),
            curve: curve.iter().map(|r| r.test_metric).collect(),
        });
    }
    let report = TrainReport {
        model: "classifier".into(),
        config: cfg.clone(),
        curve,
        final_metric,
        metric_name: "test_accuracy".into(),
        train_samples: train.len(),
        dataset_hash: train.fingerprint(),
    };
    Ok((net, report))
}

/// Encoder (pixels→latent) and decoder (latent→pixels, Sigmoid output).
fn build_autoencoder_halves(pixels: usize, cfg: &TrainConfig) -> Result<(Network, Network)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut enc = Vec::new();
    let mut width = pixels;
    for &h in &cfg.hidden {
        enc.push(Layer::Dense(Dense::glorot(width, h, &mut rng)));
        enc.push(Layer::Relu);
        width = h;
    }
    enc.push(Layer::Dense(Dense::glorot(width, cfg.latent_dim, &mut rng)));

    let mut dec = Vec::new();
    let mut width = cfg.latent_dim;
    for &h in cfg.hidden.iter().rev() {
        dec.push(Layer::Dense(Dense::glorot(width, h, &mut rng)));
        dec.push(Layer::Relu);
        width = h;
    }
    dec.push(Layer::Dense(Dense::glorot(width, pixels, &mut rng)));
    dec.push(Layer::Sigmoid);
    Ok((
        Network::new(Role::Encoder, enc, None)?,
        Network::new(Role::Generator, dec, None)?,
    ))
}

/// Mean per-pixel squared reconstruction error of `decode(encode(x))`.
pub fn reconstruction_mse(encoder: &Network, decoder: &Network, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        let img = data.image(i);
        let rec = decoder.predict(&encoder.predict(img)?)?;
        total += loss_slice(LossKind::Mse, &rec, img)?.0;
    }
    Ok(total / data.len().max(1) as f64)
}

fn train_reconstruction(
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, Network, Vec<EpochRecord>)> {
    cfg.validate(train.pixels())?;
    let (mut enc, mut dec) = build_autoencoder_halves(train.pixels(), cfg)?;
    let mut opt_e = NetworkAdam::new(&enc, cfg.adam());
    let mut opt_d = NetworkAdam::new(&dec, cfg.adam());
    let mut curve = Vec::new();
    for epoch in 0..cfg.epochs {
        let order = shuffled(train.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc_e = enc.zero_grads();
            let mut acc_d = dec.zero_grads();
            for &i in batch {
                let img = train.image(i);
                let te = enc.forward_span(0..enc.layers().len(), img, Mode::Eval, None)?;
                let td = dec.forward(te.output(), Mode::Eval, None)?;
                let (l, g) = loss_slice(LossKind::Mse, td.output().data(), img)?;
                epoch_loss += l;
                let gz = dec.backward_into(&td, &g, &mut acc_d)?;
                enc.backward_into(&te, &gz, &mut acc_e)?;
            }
            let scale = 1.0 / batch.len() as f64;
            scale_grads(&mut acc_d, scale);
            scale_grads(&mut acc_e, scale);
            opt_d.step(&mut dec, &acc_d)?;
            opt_e.step(&mut enc, &acc_e)?;
        }
        let test_mse = reconstruction_mse(&enc, &dec, test)?;
        curve.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            test_metric: test_mse,
        });
        if cfg.early_stop.is_some_and(|target| test_mse <= target) {
            break;
        }
    }
    Ok((enc, dec, curve))
}

/// Trains an encoder–decoder by pixel MSE and returns `(encoder, G)`.
pub fn train_generator(
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, Network, TrainReport)> {
    let (enc, dec, curve) = train_reconstruction(train, test, cfg)?;
    let final_metric = curve.last().map(|r| r.test_metric).unwrap_or(f64::INFINITY);
    if final_metric > MAX_GENERATOR_MSE {
        return Err(Error::TrainingFailure {
            reason: format!("generator test MSE {final_metric:.5} above {MAX_GENERATOR_MSE}"),
            curve: curve.iter().map(|r| r.test_metric).collect(),
        });
    }
    let report = TrainReport {
        model: "generator".into(),
        config: cfg.clone(),
        curve,
        final_metric,
        metric_name: "test_pixel_mse".into(),
        train_samples: train.len(),
        dataset_hash: train.fingerprint(),
    };
    Ok((enc, dec, report))
}

/// Joins encoder and decoder into one autoencoder network.
pub fn join_autoencoder(encoder: &Network, decoder: &Network) -> Result<Network> {
    let layers = encoder
        .layers()
        .iter()
        .chain(decoder.layers())
        .cloned()
        .collect();
    Network::new(Role::Autoencoder, layers, None)
}

#[derive(Debug, Clone)]
pub struct AutoencoderSet {
    /// One autoencoder per class, indexed by class id.
    pub per_class: Vec<Network>,
    pub full: Network,
    pub reports: Vec<TrainReport>,
}

/// Per-class autoencoders (class `c` uses seed `seed + c`) plus one trained
/// on all classes.
pub fn train_autoencoders(train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<AutoencoderSet> {
    let counts = train.class_counts();
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < MIN_AE_SAMPLES) {
        return Err(Error::InvalidParameter(format!(
            "class {c} has {n} training images, autoencoders need at least {MIN_AE_SAMPLES}"
        )));
    }
    let mut jobs: Vec<(Option<usize>, Dataset, Dataset, TrainConfig)> = (0..train.n_classes)
        .map(|c| {
            let cfg_c = TrainConfig {
                seed: cfg.seed + c as u64,
                ..cfg.clone()
            };
            (Some(c), train.subset(&train.indices_of(c)), test.subset(&test.indices_of(c)), cfg_c)
        })
        .collect();
    jobs.push((
        None,
        train.clone(),
        test.clone(),
        TrainConfig {
            seed: cfg.seed + train.n_classes as u64,
            ..cfg.clone()
        },
    ));

    let trained: Vec<Result<(Network, TrainReport)>> = jobs
        .par_iter()
        .map(|(class, tr, te, cfg)| {
            let (enc, dec, curve) = train_reconstruction(tr, te, cfg)?;
            let final_metric = curve.last().map(|r| r.test_metric).unwrap_or(f64::INFINITY);
            let report = TrainReport {
                model: match class {
                    Some(c) => format!("autoencoder_class_{c}"),
                    None => "autoencoder_full".into(),
                },
                config: cfg.clone(),
                curve,
                final_metric,
                metric_name: "test_pixel_mse".into(),
                train_samples: tr.len(),
                dataset_hash: tr.fingerprint(),
            };
            Ok((join_autoencoder(&enc, &dec)?, report))
        })
        .collect();
    let mut nets = Vec::new();
    let mut reports = Vec::new();
    for r in trained {
        let (n, rep) = r?;
        nets.push(n);
        reports.push(rep);
    }
    let full = nets.pop().expect("full autoencoder");
    Ok(AutoencoderSet {
        per_class: nets,
        full,
        reports,
    })
}
