//! Central finite-difference gradient oracle for feedforward networks.
#![allow(dead_code)]

use piece_core::net::{Dense, Layer, Mode, Network, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;

/// Random small network exercising every layer kind.
pub fn random_network(seed: u64) -> (Network, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = rng.random_range(3..7);
    let d1 = rng.random_range(3..8);
    let d2 = rng.random_range(3..8);
    let d3 = rng.random_range(2..5);
    let dense = |i, o, rng: &mut ChaCha8Rng| {
        let mut d = Dense::glorot(i, o, rng);
        for b in d.bias.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        Layer::Dense(d)
    };
    let layers = vec![
        dense(d0, d1, &mut rng),
        Layer::Sigmoid,
        dense(d1, d2, &mut rng),
        Layer::Dropout { rate: 0.3 },
        Layer::Relu,
        dense(d2, d3, &mut rng),
        Layer::Softmax,
    ];
    let net = Network::new(Role::Classifier, layers, Some(4)).expect("valid network");
    let input: Vec<f64> = (0..d0).map(|_| rng.random_range(-2.0..2.0)).collect();
    let weights: Vec<f64> = (0..d3).map(|_| rng.random_range(-1.0..1.0)).collect();
    (net, input, weights)
}

fn objective(net: &Network, input: &[f64], weights: &[f64], seed: u64) -> (f64, Vec<bool>) {
    let trace = net
        .forward_span(0..net.layers().len(), input, Mode::Train, Some(seed))
        .unwrap();
    let value = trace
        .output()
        .data()
        .iter()
        .zip(weights)
        .map(|(y, w)| y * w)
        .sum();
    // ReLU activity pattern, used to detect finite differences straddling a kink.
    let pattern = trace
        .activations()
        .iter()
        .flat_map(|t| t.data().iter().map(|v| *v > 0.0))
        .collect();
    (value, pattern)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        return 0.0;
    }
    (a - b).abs() / scale
}

/// Maximum relative error between analytic and central-difference gradients
/// over every parameter and input element.
pub fn max_relative_error(seed: u64) -> f64 {
    let (net, input, weights) = random_network(seed);
    let dropout_seed = seed ^ 0x5eed;
    let trace = net
        .forward_span(0..net.layers().len(), &input, Mode::Train, Some(dropout_seed))
        .unwrap();
    let grads = net
        .backward(&trace, &piece_core::Tensor::from_vec(weights.clone()))
        .unwrap();

    let mut worst: f64 = 0.0;
    let mut probe = |net_p: &Network, net_m: &Network, inp_p: &[f64], inp_m: &[f64], analytic: f64| {
        let (fp, pp) = objective(net_p, inp_p, &weights, dropout_seed);
        let (fm, pm) = objective(net_m, inp_m, &weights, dropout_seed);
        if pp != pm {
            return;
        }
        let numeric = (fp - fm) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(analytic, numeric));
    };

    for (li, layer) in net.layers().iter().enumerate() {
        let Layer::Dense(d) = layer else { continue };
        let g = grads.params[li].as_ref().expect("dense grad");
        for k in 0..d.weight.len() {
            let mut np = net.clone();
            let mut nm = net.clone();
            np.layers_mut()[li].as_dense_mut().unwrap().weight[k] += FD_EPS;
            nm.layers_mut()[li].as_dense_mut().unwrap().weight[k] -= FD_EPS;
            probe(&np, &nm, &input, &input, g.weight[k]);
        }
        for k in 0..d.bias.len() {
            let mut np = net.clone();
            let mut nm = net.clone();
            np.layers_mut()[li].as_dense_mut().unwrap().bias[k] += FD_EPS;
            nm.layers_mut()[li].as_dense_mut().unwrap().bias[k] -= FD_EPS;
            probe(&np, &nm, &input, &input, g.bias[k]);
        }
    }
    for k in 0..input.len() {
        let mut ip = input.clone();
        let mut im = input.clone();
        ip[k] += FD_EPS;
        im[k] -= FD_EPS;
        probe(&net, &net, &ip, &im, grads.input.data()[k]);
    }
    worst
}
