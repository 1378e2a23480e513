use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layer::{sigmoid, softmax_in_place, Dense, Layer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Classifier,
    Generator,
    Encoder,
    Autoencoder,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Classifier => "classifier",
            Role::Generator => "generator",
            Role::Encoder => "encoder",
            Role::Autoencoder => "autoencoder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train,
}

/// Ordered feedforward stack of layers.
///
/// For classifiers, `feature_tap` is the index of the post-ReLU layer whose
/// output is the extracted feature vector; everything up to and including it
/// is the extractor, everything after it is the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    role: Role,
    layers: Vec<Layer>,
    feature_tap: Option<usize>,
}

/// Everything recorded by one forward pass over a contiguous span of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    span: Range<usize>,
    /// `activations[0]` is the span input, `activations[k + 1]` the output of
    /// the k-th layer in the span.
    activations: Vec<Tensor>,
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace holds at least the input")
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    /// Output of network layer `layer` (absolute index).
    pub fn layer_output(&self, layer: usize) -> &Tensor {
        &self.activations[layer - self.span.start + 1]
    }

    pub fn activations(&self) -> &[Tensor] {
        &self.activations
    }

    pub fn masks(&self) -> &[Option<Vec<f64>>] {
        &self.masks
    }

    pub fn span(&self) -> Range<usize> {
        self.span.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// One entry per network layer; `Some` only for dense layers in the span.
    pub params: Vec<Option<DenseGrad>>,
    pub input: Tensor,
}

impl Gradients {
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
                    a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
                }
                (a @ None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.params.iter_mut().flatten() {
            g.weight.iter_mut().for_each(|x| *x *= factor);
            g.bias.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

impl Network {
    pub fn new(role: Role, layers: Vec<Layer>, feature_tap: Option<usize>) -> Result<Self> {
        let net = Self {
            role,
            layers,
            feature_tap,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("network has no layers".into()));
        }
        if self.layers.first().and_then(Layer::as_dense).is_none() {
            return Err(Error::InvalidParameter(
                "first layer must be dense".into(),
            ));
        }
        let mut width: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    if d.weight.len() != d.in_dim * d.out_dim {
                        return Err(Error::dim(
                            format!("layer {i} (dense) weight"),
                            d.in_dim * d.out_dim,
                            d.weight.len(),
                        ));
                    }
                    if d.bias.len() != d.out_dim {
                        return Err(Error::dim(
                            format!("layer {i} (dense) bias"),
                            d.out_dim,
                            d.bias.len(),
                        ));
                    }
                    if let Some(w) = width {
                        if w != d.in_dim {
                            return Err(Error::dim(format!("layer {i} (dense) input"), w, d.in_dim));
                        }
                    }
                    width = Some(d.out_dim);
                }
                Layer::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::InvalidParameter(format!(
                            "layer {i}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                }
                Layer::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::InvalidParameter(format!(
                            "layer {i}: softmax must be the final layer"
                        )));
                    }
                }
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        if self.role == Role::Classifier {
            let tap = self.feature_tap.ok_or_else(|| {
                Error::InvalidParameter("classifier requires a feature tap".into())
            })?;
            if !matches!(self.layers.get(tap), Some(Layer::Relu)) {
                return Err(Error::InvalidParameter(format!(
                    "feature tap {tap} must point at a ReLU layer"
                )));
            }
            let head_dense = self.layers[tap + 1..]
                .iter()
                .filter(|l| matches!(l, Layer::Dense(_)))
                .count();
            if head_dense != 1 {
                return Err(Error::InvalidParameter(format!(
                    "classifier head must contain exactly one dense layer, found {head_dense}"
                )));
            }
        } else if let Some(tap) = self.feature_tap {
            if tap >= self.layers.len() {
                return Err(Error::InvalidParameter(format!("feature tap {tap} out of range")));
            }
        }
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn feature_tap(&self) -> Option<usize> {
        self.feature_tap
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].as_dense().map(|d| d.in_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(Layer::as_dense)
            .map(|d| d.out_dim)
            .unwrap_or(0)
    }

    /// Width of the layer-X feature vector (classifiers only).
    pub fn feature_dim(&self) -> Option<usize> {
        let tap = self.feature_tap?;
        self.layers[..=tap]
            .iter()
            .rev()
            .find_map(Layer::as_dense)
            .map(|d| d.out_dim)
    }

    /// Layers `0..=feature_tap`.
    pub fn extractor_span(&self) -> Range<usize> {
        0..self.feature_tap.map(|t| t + 1).unwrap_or(self.layers.len())
    }

    /// Layers after `feature_tap`.
    pub fn head_span(&self) -> Range<usize> {
        self.feature_tap.map(|t| t + 1).unwrap_or(self.layers.len())..self.layers.len()
    }

    /// The dense layer mapping features to class logits.
    pub fn head_dense(&self) -> Option<&Dense> {
        self.layers[self.head_span()].iter().find_map(Layer::as_dense)
    }

    /// Whether any dropout layer is present, whatever its rate.
    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Dropout { .. }))
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::as_dense)
            .map(|d| d.weight.len() + d.bias.len())
            .sum()
    }

    /// Stable content hash over role, topology and parameter bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.role.as_str().as_bytes());
        h.update((self.feature_tap.map(|t| t as i64).unwrap_or(-1)).to_le_bytes());
        for layer in &self.layers {
            h.update(layer.kind_name().as_bytes());
            match layer {
                Layer::Dense(d) => {
                    h.update((d.in_dim as u64).to_le_bytes());
                    h.update((d.out_dim as u64).to_le_bytes());
                    for v in d.weight.iter().chain(&d.bias) {
                        h.update(v.to_le_bytes());
                    }
                }
                Layer::Dropout { rate } => h.update(rate.to_le_bytes()),
                _ => {}
            }
        }
        hex::encode(h.finalize())
    }

    pub fn forward(&self, input: &Tensor, mode: Mode, seed: Option<u64>) -> Result<ForwardTrace> {
        self.forward_span(0..self.layers.len(), input.data(), mode, seed)
    }

    /// Eval-mode output of the whole network.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward_span(0..self.layers.len(), input, Mode::Eval, None)?
            .output()
            .data()
            .to_vec())
    }

    /// Eval-mode output of the extractor (the layer-X feature vector).
    pub fn features(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward_span(self.extractor_span(), input, Mode::Eval, None)?
            .output()
            .data()
            .to_vec())
    }

    /// Eval-mode class probabilities computed from a feature vector.
    pub fn head_probs(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward_span(self.head_span(), features, Mode::Eval, None)?
            .output()
            .data()
            .to_vec())
    }

    pub fn forward_span(
        &self,
        span: Range<usize>,
        input: &[f64],
        mode: Mode,
        seed: Option<u64>,
    ) -> Result<ForwardTrace> {
        if span.end > self.layers.len() || span.start > span.end {
            return Err(Error::InvalidParameter(format!(
                "layer span {span:?} outside network of {} layers",
                self.layers.len()
            )));
        }
        let mut rng: Option<ChaCha8Rng> = None;
        if mode == Mode::Train
            && self.layers[span.clone()]
                .iter()
                .any(|l| matches!(l, Layer::Dropout { .. }))
        {
            let seed = seed.ok_or_else(|| {
                Error::InvalidParameter("train mode with dropout requires a seed".into())
            })?;
            rng = Some(ChaCha8Rng::seed_from_u64(seed));
        }

        let mut activations: Vec<Tensor> = Vec::with_capacity(span.len() + 1);
        let mut masks = Vec::with_capacity(span.len());
        activations.push(Tensor::from_vec(input.to_vec()));
        for idx in span.clone() {
            let layer = &self.layers[idx];
            let current = activations.last().expect("input pushed").data();
            let mut mask = None;
            let next = match layer {
                Layer::Dense(d) => {
                    if current.len() != d.in_dim {
                        return Err(Error::dim(
                            format!("layer {idx} (dense) input"),
                            d.in_dim,
                            current.len(),
                        ));
                    }
                    let mut out = Vec::with_capacity(d.out_dim);
                    d.apply(current, &mut out);
                    out
                }
                Layer::Relu => current.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                Layer::Sigmoid => current.iter().map(|&v| sigmoid(v)).collect(),
                Layer::Softmax => {
                    let mut out = current.to_vec();
                    softmax_in_place(&mut out);
                    out
                }
                Layer::Dropout { rate } => match (mode, rng.as_mut()) {
                    (Mode::Train, Some(rng)) if *rate > 0.0 => {
                        let keep = 1.0 - rate;
                        let m: Vec<f64> = (0..current.len())
                            .map(|_| {
                                if rng.random::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        let out = current.iter().zip(&m).map(|(v, k)| v * k).collect();
                        mask = Some(m);
                        out
                    }
                    _ => current.to_vec(),
                },
            };
            masks.push(mask);
            activations.push(Tensor::from_vec(next));
        }
        if activations.last().expect("non-empty").data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("forward output of span {span:?}")));
        }
        Ok(ForwardTrace {
            span,
            activations,
            masks,
        })
    }

    /// Reverse-mode gradients of a scalar objective with respect to the
    /// parameters in the traced span and the span input.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &Tensor) -> Result<Gradients> {
        self.backward_impl(trace, output_grad.data(), true)
    }

    /// Like [`Network::backward`] but skips parameter gradients.
    pub fn input_gradient(&self, trace: &ForwardTrace, output_grad: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .backward_impl(trace, output_grad, false)?
            .input
            .into_data())
    }

    /// Adds this sample's parameter gradients into `acc` (one slot per
    /// network layer) and returns the input gradient.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
        acc: &mut [Option<DenseGrad>],
    ) -> Result<Vec<f64>> {
        if acc.len() != self.layers.len() {
            return Err(Error::dim("gradient accumulator", self.layers.len(), acc.len()));
        }
        self.backward_core(trace, output_grad, Some(acc))
    }

    /// Zeroed accumulator for [`Network::backward_into`].
    pub fn zero_grads(&self) -> Vec<Option<DenseGrad>> {
        self.layers
            .iter()
            .map(|l| {
                l.as_dense().map(|d| DenseGrad {
                    weight: vec![0.0; d.weight.len()],
                    bias: vec![0.0; d.bias.len()],
                })
            })
            .collect()
    }

    fn backward_impl(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
        want_params: bool,
    ) -> Result<Gradients> {
        let span = trace.span.clone();
        let mut params: Vec<Option<DenseGrad>> = vec![None; self.layers.len()];
        if want_params {
            for idx in span {
                if let Layer::Dense(d) = &self.layers[idx] {
                    params[idx] = Some(DenseGrad {
                        weight: vec![0.0; d.weight.len()],
                        bias: vec![0.0; d.bias.len()],
                    });
                }
            }
        }
        let input = self.backward_core(
            trace,
            output_grad,
            if want_params { Some(&mut params) } else { None },
        )?;
        Ok(Gradients {
            params,
            input: Tensor::from_vec(input),
        })
    }

    fn backward_core(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
        mut acc: Option<&mut [Option<DenseGrad>]>,
    ) -> Result<Vec<f64>> {
        let span = trace.span.clone();
        if span.end > self.layers.len() || trace.activations.len() != span.len() + 1 {
            return Err(Error::Consistency(
                "trace was not produced by this network".into(),
            ));
        }
        for (k, idx) in span.clone().enumerate() {
            if let Layer::Dense(d) = &self.layers[idx] {
                let (i, o) = (trace.activations[k].len(), trace.activations[k + 1].len());
                if i != d.in_dim || o != d.out_dim {
                    return Err(Error::Consistency(format!(
                        "trace shape does not match layer {idx}"
                    )));
                }
            }
        }
        if output_grad.len() != trace.output().len() {
            return Err(Error::dim("output gradient", trace.output().len(), output_grad.len()));
        }

        let mut grad = output_grad.to_vec();
        for (k, idx) in span.clone().enumerate().rev() {
            let input = trace.activations[k].data();
            let output = trace.activations[k + 1].data();
            grad = match &self.layers[idx] {
                Layer::Dense(d) => {
                    if let Some(slot) = acc.as_mut().and_then(|a| a[idx].as_mut()) {
                        for (o, &g) in grad.iter().enumerate() {
                            slot.bias[o] += g;
                            if g == 0.0 {
                                continue;
                            }
                            let row = &mut slot.weight[o * d.in_dim..(o + 1) * d.in_dim];
                            for (a, x) in row.iter_mut().zip(input) {
                                *a += g * x;
                            }
                        }
                    }
                    d.adjoint(&grad)
                }
                // Subgradient 0 at exactly 0.
                Layer::Relu => grad
                    .iter()
                    .zip(input)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect(),
                Layer::Sigmoid => grad
                    .iter()
                    .zip(output)
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect(),
                Layer::Softmax => {
                    let dot: f64 = grad.iter().zip(output).map(|(g, y)| g * y).sum();
                    grad.iter().zip(output).map(|(g, y)| y * (g - dot)).collect()
                }
                Layer::Dropout { .. } => match &trace.masks[k] {
                    Some(mask) => grad.iter().zip(mask).map(|(g, m)| g * m).collect(),
                    None => grad,
                },
            };
        }
        Ok(grad)
    }
}
