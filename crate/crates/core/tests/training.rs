use std::collections::BTreeMap;
use std::sync::OnceLock;

use piece_core::datagen::{make_glyphs, Dataset, GlyphParams, Split};
use piece_core::net::{network_from_str, network_to_string, Network};
use piece_core::training::{
    classifier_accuracy, reconstruction_mse, train_autoencoders, train_classifier, train_generator, AutoencoderSet,
    TrainConfig,
};
use piece_core::Error;

struct Trained {
    test: Dataset,
    classifier: Network,
    accuracy: f64,
    encoder: Network,
    generator: Network,
    generator_mse: f64,
    aes: AutoencoderSet,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let train = make_glyphs(&GlyphParams::default(), 250, Split::Train).unwrap();
        let test = make_glyphs(&GlyphParams::default(), 250, Split::Test).unwrap();
        let (classifier, report) = train_classifier(&train, &test, &TrainConfig::classifier_default()).unwrap();
        let gen_cfg = TrainConfig { epochs: 50, ..TrainConfig::generator_default() };
        let (encoder, generator, gen_report) = train_generator(&train, &test, &gen_cfg).unwrap();
        let ae_cfg = TrainConfig { epochs: 50, ..TrainConfig::autoencoder_default() };
        let aes = train_autoencoders(&train, &test, &ae_cfg).unwrap();
        Trained {
            test,
            accuracy: report.final_metric,
            classifier,
            encoder,
            generator,
            generator_mse: gen_report.final_metric,
            aes,
        }
    })
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[test]
fn classifier_reaches_accuracy_bound() {
    let t = trained();
    assert!(t.accuracy >= 0.90, "accuracy {}", t.accuracy);
    assert_eq!(classifier_accuracy(&t.classifier, &t.test).unwrap(), t.accuracy);
    assert!(t.classifier.has_dropout());
    assert_eq!(t.classifier.feature_dim(), Some(32));
}

#[test]
fn eval_prediction_is_deterministic() {
    let t = trained();
    let img = t.test.image(3);
    assert_eq!(t.classifier.predict(img).unwrap(), t.classifier.predict(img).unwrap());
}

#[test]
fn zero_learning_rate_stays_at_chance() {
    let train = make_glyphs(&GlyphParams::default(), 60, Split::Train).unwrap();
    let test = make_glyphs(&GlyphParams::default(), 60, Split::Test).unwrap();
    let cfg = TrainConfig { epochs: 1, lr: 0.0, early_stop: None, ..TrainConfig::classifier_default() };
    match train_classifier(&train, &test, &cfg) {
        Err(Error::TrainingFailure { curve, .. }) => {
            let acc = *curve.last().unwrap();
            assert!((acc - 0.25).abs() <= 0.1, "untrained accuracy {acc}");
        }
        other => panic!("expected a training failure, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn same_seed_gives_identical_weights() {
    let train = make_glyphs(&GlyphParams::default(), 40, Split::Train).unwrap();
    let cfg = TrainConfig { epochs: 2, early_stop: None, ..TrainConfig::classifier_default() };
    let run = || match train_classifier(&train, &train, &cfg) {
        Ok((net, _)) => net.fingerprint(),
        Err(Error::TrainingFailure { curve, .. }) => format!("{curve:?}"),
        Err(e) => panic!("{e}"),
    };
    assert_eq!(run(), run());
    let gen_cfg = TrainConfig { epochs: 1, ..TrainConfig::generator_default() };
    let g = || match train_generator(&train, &train, &gen_cfg) {
        Ok((_, g, _)) => g.fingerprint(),
        Err(e) => e.to_string(),
    };
    assert_eq!(g(), g());
}

#[test]
fn generator_reconstructs_glyphs() {
    let t = trained();
    assert!(t.generator_mse <= 0.01, "test mse {}", t.generator_mse);
    let img = t.test.image(0);
    let z = t.encoder.predict(img).unwrap();
    let rec = t.generator.predict(&z).unwrap();
    assert!(mse(img, &rec) <= 0.01);
    assert!((reconstruction_mse(&t.encoder, &t.generator, &t.test).unwrap() - t.generator_mse).abs() < 1e-12);
}

#[test]
fn generator_output_stays_in_unit_range() {
    let t = trained();
    let zero = t.generator.predict(&vec![0.0; t.generator.input_dim()]).unwrap();
    assert!(zero.iter().all(|&v| v > 0.0 && v < 1.0));
    let a = t.encoder.predict(t.test.image(1)).unwrap();
    let b = t.encoder.predict(t.test.image(700)).unwrap();
    for k in 0..=10 {
        let s = k as f64 / 10.0;
        let z: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - s) * x + s * y).collect();
        assert!(t.generator.predict(&z).unwrap().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn class_autoencoders_prefer_their_class() {
    let t = trained();
    let n = t.test.n_classes;
    assert_eq!(t.aes.per_class.len(), n);
    assert_eq!(t.aes.reports.len(), n + 1);
    let class_mse = |ae: &Network, c: usize| {
        let idx = t.test.indices_of(c);
        idx.iter().map(|&i| mse(t.test.image(i), &ae.predict(t.test.image(i)).unwrap())).sum::<f64>() / idx.len() as f64
    };
    let mut worst_in_class: f64 = 0.0;
    for (c, ae) in t.aes.per_class.iter().enumerate() {
        let inside = class_mse(ae, c);
        let outside = (0..n).filter(|&o| o != c).map(|o| class_mse(ae, o)).sum::<f64>() / (n - 1) as f64;
        assert!(inside < outside, "class {c}: {inside} vs {outside}");
        worst_in_class = worst_in_class.max(inside);
    }
    let full = t.aes.reports[n].final_metric;
    assert!(full <= 2.0 * worst_in_class, "full {full} vs {worst_in_class}");
}

#[test]
fn autoencoder_round_trip_is_bit_exact() {
    let t = trained();
    let ae = &t.aes.full;
    let text = network_to_string(ae, &BTreeMap::new()).unwrap();
    let (back, _) = network_from_str(&text).unwrap();
    for i in [0, 250, 999] {
        let img = t.test.image(i);
        let (a, b) = (ae.predict(img).unwrap(), back.predict(img).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn too_few_samples_per_class_is_rejected() {
    let train = make_glyphs(&GlyphParams::default(), 10, Split::Train).unwrap();
    let err = train_autoencoders(&train, &train, &TrainConfig::autoencoder_default()).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)), "{err}");
}
