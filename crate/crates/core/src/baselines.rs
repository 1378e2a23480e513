//! Latent-space optimisation baselines: descend directly toward the
//! counterfactual class, optionally penalising feature-space distance.

use serde::{Deserialize, Serialize};

use crate::net::one_hot;
use crate::piece::{LatentAdam, LatentModel, Objective};
use crate::tensor::l2_distance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    MinEdit,
    /// Class term weighted by `lambda` plus squared feature distance to `x`.
    CMinEdit { lambda: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::MinEdit => "min_edit",
            Method::CMinEdit { .. } => "c_min_edit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stop", rename_all = "snake_case")]
pub enum BaselineStop {
    /// First iterate predicted as the counterfactual class.
    BoundaryCross,
    /// Last iterate still predicted as the original class.
    SemifactualMaxEdit,
    /// Last iterate before the feature distance travelled from the starting
    /// iterate reaches `target`.
    Distance { target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: Method,
    pub lr: f64,
    pub max_steps: usize,
    pub stop: BaselineStop,
}

impl BaselineConfig {
    pub fn new(method: Method, stop: BaselineStop) -> Self {
        Self { method, lr: 0.02, max_steps: 2000, stop }
    }

    pub fn validate(&self) -> Result<()> {
        if let Method::CMinEdit { lambda } = self.method {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
            }
        }
        if let BaselineStop::Distance { target } = self.stop {
            if !(target >= 0.0 && target.is_finite()) {
                return Err(Error::InvalidParameter(format!("distance target must be non-negative, got {target}")));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub predicted: usize,
    /// Feature distance from `x`.
    pub distance: f64,
    /// Feature distance from the starting iterate.
    pub travelled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub method: Method,
    pub stop: BaselineStop,
    pub z: Vec<f64>,
    pub image: Vec<f64>,
    pub features: Vec<f64>,
    pub probs: Vec<f64>,
    pub predicted: usize,
    /// Index of the returned iterate.
    pub step: usize,
    /// `Some(reason)` when the stop rule was never satisfied; the other
    /// fields then describe the final iterate.
    pub failure: Option<String>,
    pub trace: Vec<TraceStep>,
    /// Steps at which the distance travelled decreased.
    pub distance_decreases: usize,
}

impl BaselineOutcome {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs one baseline from the inversion `z` of an image whose features are
/// `x` and whose predicted class is `class`.
pub fn run_baseline(
    model: &LatentModel,
    z: &[f64],
    x: &[f64],
    class: usize,
    counterfactual: usize,
    cfg: &BaselineConfig,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    let n_classes = model.classifier.output_dim();
    if class >= n_classes || counterfactual >= n_classes || class == counterfactual {
        return Err(Error::InvalidParameter(format!("classes {class} -> {counterfactual} invalid")));
    }
    let y = one_hot(counterfactual, n_classes);
    let obj = match cfg.method {
        Method::MinEdit => Objective { probs: Some((&y, 1.0)), ..Default::default() },
        Method::CMinEdit { lambda } => Objective { probs: Some((&y, lambda)), features: Some((x, 1.0)), pixels: None },
    };
    let mut current = z.to_vec();
    let mut opt = LatentAdam::new(current.len(), cfg.lr, false);
    let mut trace = Vec::new();
    let mut previous: Option<(Vec<f64>, crate::piece::LatentEval)> = None;
    let mut decreases = 0;
    let mut origin: Option<Vec<f64>> = None;
    let finish = |z: Vec<f64>, eval: crate::piece::LatentEval, step, failure, trace, decreases| BaselineOutcome {
        method: cfg.method,
        stop: cfg.stop,
        predicted: eval.predicted(),
        z,
        image: eval.image,
        features: eval.features,
        probs: eval.probs,
        step,
        failure,
        trace,
        distance_decreases: decreases,
    };
    for step in 0..=cfg.max_steps {
        let (eval, _, grad) = model.objective(&current, &obj)?;
        let distance = l2_distance(&eval.features, x);
        let travelled = l2_distance(&eval.features, origin.get_or_insert_with(|| eval.features.clone()));
        let predicted = eval.predicted();
        if let Some(last) = trace.last() {
            let last: &TraceStep = last;
            if travelled < last.travelled {
                decreases += 1;
            }
        }
        trace.push(TraceStep { predicted, distance, travelled });
        match cfg.stop {
            BaselineStop::BoundaryCross if predicted == counterfactual => {
                return Ok(finish(current, eval, step, None, trace, decreases));
            }
            BaselineStop::SemifactualMaxEdit if predicted != class => {
                return Ok(match previous {
                    Some((pz, pe)) => finish(pz, pe, step - 1, None, trace, decreases),
                    None => finish(current, eval, step, Some("starting point is not in the original class".into()), trace, decreases),
                });
            }
            BaselineStop::Distance { target } if target == 0.0 => {
                return Ok(finish(current, eval, 0, None, trace, decreases));
            }
            BaselineStop::Distance { target } if travelled >= target => {
                return Ok(match previous {
                    Some((pz, pe)) if pe.predicted() == class => finish(pz, pe, step - 1, None, trace, decreases),
                    Some((pz, pe)) => finish(pz, pe, step - 1, Some("left the original class before the target distance".into()), trace, decreases),
                    None => finish(current, eval, step, Some("target distance reached at the start".into()), trace, decreases),
                });
            }
            _ => {}
        }
        if step == cfg.max_steps {
            let reason = format!("stop rule not met in {} steps", cfg.max_steps);
            return Ok(finish(current, eval, step, Some(reason), trace, decreases));
        }
        let mut next = current.clone();
        opt.step(&mut next, &grad)?;
        previous = Some((std::mem::replace(&mut current, next), eval));
    }
    unreachable!("loop returns on its last iteration")
}

pub fn min_edit(
    model: &LatentModel,
    z: &[f64],
    x: &[f64],
    class: usize,
    counterfactual: usize,
    stop: BaselineStop,
) -> Result<BaselineOutcome> {
    run_baseline(model, z, x, class, counterfactual, &BaselineConfig::new(Method::MinEdit, stop))
}

pub fn c_min_edit(
    model: &LatentModel,
    z: &[f64],
    x: &[f64],
    class: usize,
    counterfactual: usize,
    lambda: f64,
    stop: BaselineStop,
) -> Result<BaselineOutcome> {
    run_baseline(model, z, x, class, counterfactual, &BaselineConfig::new(Method::CMinEdit { lambda }, stop))
}

/// Runs `method` until the feature distance it has travelled would reach
/// `target`.
pub fn run_to_distance(
    model: &LatentModel,
    method: Method,
    z: &[f64],
    x: &[f64],
    class: usize,
    counterfactual: usize,
    target: f64,
) -> Result<BaselineOutcome> {
    run_baseline(
        model,
        z,
        x,
        class,
        counterfactual,
        &BaselineConfig::new(method, BaselineStop::Distance { target }),
    )
}
