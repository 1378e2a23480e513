mod common;

use common::grad_oracle::max_relative_error;
use piece_core::net::{
    load_network, save_network, Dense, Layer, LossKind, Mode, Network, Role,
};
use piece_core::{Error, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn identity_dense(n: usize) -> Layer {
    let mut d = Dense::zeros(n, n);
    for i in 0..n {
        d.weight[i * n + i] = 1.0;
    }
    Layer::Dense(d)
}

#[test]
fn dense_identity_passes_input_through() {
    let net = Network::new(Role::Generator, vec![identity_dense(2)], None).unwrap();
    let out = net.forward(&Tensor::from_vec(vec![1.0, 2.0]), Mode::Eval, None).unwrap();
    assert_eq!(out.output().data(), &[1.0, 2.0]);
}

#[test]
fn relu_and_softmax_definitions() {
    let net = Network::new(Role::Generator, vec![identity_dense(2), Layer::Relu], None).unwrap();
    let out = net.predict(&[-1.0, 2.0]).unwrap();
    assert_eq!(out, vec![0.0, 2.0]);

    let net = Network::new(Role::Generator, vec![identity_dense(2), Layer::Softmax], None).unwrap();
    assert_eq!(net.predict(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn dense_adjoint_is_transpose() {
    let d = Dense {
        in_dim: 3,
        out_dim: 2,
        weight: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        bias: vec![0.0, 0.0],
    };
    let net = Network::new(Role::Generator, vec![Layer::Dense(d)], None).unwrap();
    let trace = net.forward(&Tensor::from_vec(vec![0.1, 0.2, 0.3]), Mode::Eval, None).unwrap();
    let g = net.backward(&trace, &Tensor::from_vec(vec![1.0, -1.0])).unwrap();
    assert_eq!(g.input.data(), &[-3.0, -3.0, -3.0]);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let net = Network::new(Role::Generator, vec![identity_dense(2), Layer::Relu], None).unwrap();
    let trace = net.forward(&Tensor::from_vec(vec![0.0, 1.0]), Mode::Eval, None).unwrap();
    let g = net.backward(&trace, &Tensor::from_vec(vec![1.0, 1.0])).unwrap();
    assert_eq!(g.input.data(), &[0.0, 1.0]);
}

#[test]
fn shape_mismatch_names_layer() {
    let net = Network::new(Role::Generator, vec![identity_dense(3)], None).unwrap();
    let err = net.forward(&Tensor::from_vec(vec![1.0]), Mode::Eval, None).unwrap_err();
    assert!(err.to_string().contains("layer 0"), "{err}");
}

#[test]
fn train_mode_with_dropout_needs_seed() {
    let net = Network::new(
        Role::Generator,
        vec![identity_dense(2), Layer::Dropout { rate: 0.5 }],
        None,
    )
    .unwrap();
    assert!(net.forward(&Tensor::from_vec(vec![1.0, 1.0]), Mode::Train, None).is_err());
}

#[test]
fn trace_from_other_network_is_rejected() {
    let a = Network::new(Role::Generator, vec![identity_dense(3)], None).unwrap();
    let b = Network::new(Role::Generator, vec![identity_dense(2)], None).unwrap();
    let trace = a.forward(&Tensor::from_vec(vec![1.0, 2.0, 3.0]), Mode::Eval, None).unwrap();
    assert!(b.backward(&trace, &Tensor::from_vec(vec![1.0, 1.0, 1.0])).is_err());
}

#[test]
fn finite_difference_gradients_over_twenty_seeds() {
    for seed in 0..20 {
        let err = max_relative_error(seed);
        assert!(err < 1e-4, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn dropout_expectation_matches_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::new(
        Role::Generator,
        vec![
            Layer::Dense(Dense::glorot(4, 6, &mut rng)),
            Layer::Relu,
            Layer::Dropout { rate: 0.3 },
        ],
        None,
    )
    .unwrap();
    let input = Tensor::from_vec(vec![0.5, 1.0, -0.3, 0.8]);
    let eval = net.forward(&input, Mode::Eval, None).unwrap().output().clone();
    let passes = 10_000;
    let mut mean = vec![0.0; 6];
    for s in 0..passes {
        let out = net.forward(&input, Mode::Train, Some(s)).unwrap();
        for (m, v) in mean.iter_mut().zip(out.output().data()) {
            *m += v / passes as f64;
        }
    }
    for (m, e) in mean.iter().zip(eval.data()) {
        if *e > 0.0 {
            assert!((m - e).abs() / e < 0.02, "mean {m} vs eval {e}");
        } else {
            assert_eq!(*m, 0.0);
        }
    }
}

#[test]
fn network_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = Network::new(
        Role::Classifier,
        vec![
            Layer::Dense(Dense::glorot(5, 4, &mut rng)),
            Layer::Relu,
            Layer::Dropout { rate: 0.1 + 1e-17 },
            Layer::Dense(Dense::glorot(4, 3, &mut rng)),
            Layer::Relu,
            Layer::Dense(Dense::glorot(3, 2, &mut rng)),
            Layer::Softmax,
        ],
        Some(4),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    save_network(&net, &path).unwrap();
    let back = load_network(&path).unwrap();
    assert_eq!(net, back);
    assert_eq!(net.fingerprint(), back.fingerprint());
}

#[test]
fn wrong_magic_and_truncation_are_format_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Network::new(
        Role::Generator,
        vec![Layer::Dense(Dense::glorot(3, 2, &mut rng)), Layer::Sigmoid],
        None,
    )
    .unwrap();
    let text = piece_core::net::network_to_string(&net, &Default::default()).unwrap();

    let bad_magic = text.replace("piece-network", "not-a-network");
    assert!(matches!(
        piece_core::net::network_from_str(&bad_magic),
        Err(Error::Format(_))
    ));

    // Drop the last 8 bytes of the weight payload.
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let w = doc["layers"][0]["weight"].as_str().unwrap().to_string();
    use base64::Engine;
    let mut bytes = base64::engine::general_purpose::STANDARD.decode(w).unwrap();
    bytes.truncate(bytes.len() - 8);
    doc["layers"][0]["weight"] =
        serde_json::Value::String(base64::engine::general_purpose::STANDARD.encode(bytes));
    let err = piece_core::net::network_from_str(&doc.to_string()).unwrap_err();
    assert!(err.to_string().contains("layer 0"), "{err}");

    let bumped = text.replace("\"format_version\": 1", "\"format_version\": 9");
    assert!(piece_core::net::network_from_str(&bumped).is_err());
}

#[test]
fn checksum_detects_tampering() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Network::new(Role::Generator, vec![Layer::Dense(Dense::glorot(2, 2, &mut rng))], None).unwrap();
    let text = piece_core::net::network_to_string(&net, &Default::default()).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let other = piece_core::net::network_to_string(
        &Network::new(Role::Generator, vec![Layer::Dense(Dense::glorot(2, 2, &mut rng))], None).unwrap(),
        &Default::default(),
    )
    .unwrap();
    let other: serde_json::Value = serde_json::from_str(&other).unwrap();
    doc["layers"][0]["weight"] = other["layers"][0]["weight"].clone();
    assert!(matches!(
        piece_core::net::network_from_str(&doc.to_string()),
        Err(Error::Checksum { layer: 0 })
    ));
}

#[test]
fn loss_through_tensor_api() {
    let (v, g) = piece_core::net::loss(
        LossKind::L2Sq,
        &Tensor::from_vec(vec![1.0, 2.0]),
        &Tensor::from_vec(vec![0.0, 0.0]),
    )
    .unwrap();
    assert_eq!(v, 5.0);
    assert_eq!(g.data(), &[2.0, 4.0]);
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-15.0f64..15.0, 2..8)) {
        let n = logits.len();
        let net = Network::new(Role::Generator, vec![identity_dense(n), Layer::Softmax], None).unwrap();
        let p = net.predict(&logits).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn forward_and_backward_are_pure(seed in 0u64..1000) {
        let (net, input, w) = common::grad_oracle::random_network(seed);
        let t1 = net.forward_span(0..net.layers().len(), &input, Mode::Train, Some(seed)).unwrap();
        let t2 = net.forward_span(0..net.layers().len(), &input, Mode::Train, Some(seed)).unwrap();
        prop_assert_eq!(&t1, &t2);
        let g1 = net.backward(&t1, &Tensor::from_vec(w.clone())).unwrap();
        let g2 = net.backward(&t2, &Tensor::from_vec(w)).unwrap();
        prop_assert_eq!(g1, g2);
    }
}
