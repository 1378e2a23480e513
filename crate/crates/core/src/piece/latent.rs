use crate::net::{adam_step, AdamConfig, AdamState, Mode, Network};
use crate::tensor::{argmax, squared_distance};
use crate::{Error, Result};

/// The composition `z -> G(z) -> classifier`, differentiable in `z`.
#[derive(Debug, Clone, Copy)]
pub struct LatentModel<'a> {
    pub generator: &'a Network,
    pub classifier: &'a Network,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentEval {
    pub image: Vec<f64>,
    pub features: Vec<f64>,
    pub probs: Vec<f64>,
}

impl LatentEval {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Weighted squared-distance terms of a latent objective. Absent terms are
/// not computed.
#[derive(Debug, Clone, Copy, Default)]
pub struct Objective<'b> {
    pub features: Option<(&'b [f64], f64)>,
    pub pixels: Option<(&'b [f64], f64)>,
    pub probs: Option<(&'b [f64], f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Terms {
    pub features: f64,
    pub pixels: f64,
    pub probs: f64,
    pub total: f64,
}

impl<'a> LatentModel<'a> {
    pub fn new(generator: &'a Network, classifier: &'a Network) -> Result<Self> {
        if classifier.feature_tap().is_none() {
            return Err(Error::InvalidParameter("classifier has no feature tap".into()));
        }
        if generator.output_dim() != classifier.input_dim() {
            return Err(Error::dim("generator output vs classifier input", classifier.input_dim(), generator.output_dim()));
        }
        Ok(Self { generator, classifier })
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.input_dim()
    }

    pub fn eval(&self, z: &[f64]) -> Result<LatentEval> {
        let image = self.generator.predict(z)?;
        let features = self.classifier.features(&image)?;
        let probs = self.classifier.head_probs(&features)?;
        Ok(LatentEval { image, features, probs })
    }

    /// Objective value and its gradient with respect to `z`.
    pub fn objective(&self, z: &[f64], obj: &Objective) -> Result<(LatentEval, Terms, Vec<f64>)> {
        let g = self.generator;
        let c = self.classifier;
        let tg = g.forward_span(0..g.layers().len(), z, Mode::Eval, None)?;
        let image = tg.output().data().to_vec();
        let te = c.forward_span(c.extractor_span(), &image, Mode::Eval, None)?;
        let features = te.output().data().to_vec();
        let th = c.forward_span(c.head_span(), &features, Mode::Eval, None)?;
        let probs = th.output().data().to_vec();

        let mut terms = Terms::default();
        let mut d_feat = vec![0.0; features.len()];
        if let Some((target, w)) = obj.probs {
            if target.len() != probs.len() {
                return Err(Error::dim("probability target", probs.len(), target.len()));
            }
            terms.probs = squared_distance(&probs, target);
            let d_probs: Vec<f64> = probs.iter().zip(target).map(|(p, t)| 2.0 * w * (p - t)).collect();
            d_feat = c.input_gradient(&th, &d_probs)?;
        }
        if let Some((target, w)) = obj.features {
            if target.len() != features.len() {
                return Err(Error::dim("feature target", features.len(), target.len()));
            }
            terms.features = squared_distance(&features, target);
            for ((d, f), t) in d_feat.iter_mut().zip(&features).zip(target) {
                *d += 2.0 * w * (f - t);
            }
        }
        let mut d_img = c.input_gradient(&te, &d_feat)?;
        if let Some((target, w)) = obj.pixels {
            if target.len() != image.len() {
                return Err(Error::dim("pixel target", image.len(), target.len()));
            }
            terms.pixels = squared_distance(&image, target);
            for ((d, p), t) in d_img.iter_mut().zip(&image).zip(target) {
                *d += 2.0 * w * (p - t);
            }
        }
        let grad = g.input_gradient(&tg, &d_img)?;
        let w = |o: Option<(&[f64], f64)>| o.map_or(0.0, |(_, w)| w);
        terms.total = w(obj.features) * terms.features + w(obj.pixels) * terms.pixels + w(obj.probs) * terms.probs;
        if !terms.total.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent objective".into()));
        }
        Ok((LatentEval { image, features, probs }, terms, grad))
    }
}

/// Adam on a latent vector, descending (or ascending) the supplied gradient.
#[derive(Debug, Clone)]
pub struct LatentAdam {
    state: AdamState,
    cfg: AdamConfig,
    ascend: bool,
}

impl LatentAdam {
    pub fn new(dim: usize, lr: f64, ascend: bool) -> Self {
        // A negligible epsilon keeps steps scale-free where the softmax saturates.
        let cfg = AdamConfig { eps: f64::MIN_POSITIVE, ..AdamConfig::with_lr(lr) };
        Self { state: AdamState::new(dim), cfg, ascend }
    }

    pub fn step(&mut self, z: &mut [f64], grad: &[f64]) -> Result<()> {
        if self.ascend {
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            adam_step(z, &neg, &mut self.state, &self.cfg)
        } else {
            adam_step(z, grad, &mut self.state, &self.cfg)
        }
    }
}
