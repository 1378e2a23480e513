use serde::{Deserialize, Serialize};

use super::config::PieceConfig;
use super::latent::{LatentAdam, LatentModel, Objective};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visualization {
    pub z: Vec<f64>,
    pub image: Vec<f64>,
    pub features: Vec<f64>,
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub residual_before: f64,
    pub residual: f64,
    /// Step index of the returned iterate (0 is the warm start).
    pub best_step: usize,
    /// False when a class constraint was requested and no iterate met it.
    pub constraint_met: bool,
}

/// Searches for `z'` whose features under the classifier match `target`,
/// warm-started from `z_init`. Returns the lowest-residual iterate, restricted
/// to iterates predicted as `keep_class` when one is given.
pub fn visualize(
    model: &LatentModel,
    target: &[f64],
    z_init: &[f64],
    cfg: &PieceConfig,
    keep_class: Option<usize>,
) -> Result<Visualization> {
    let obj = Objective { features: Some((target, 1.0)), ..Default::default() };
    let mut z = z_init.to_vec();
    let mut opt = LatentAdam::new(z.len(), cfg.visual_lr, false);
    let mut best: Option<Visualization> = None;
    let mut fallback: Option<Visualization> = None;
    let mut residual_before = f64::NAN;
    for step in 0..=cfg.visual_steps {
        let (eval, terms, grad) = model.objective(&z, &obj)?;
        if step == 0 {
            residual_before = terms.features;
        }
        let predicted = eval.predicted();
        let candidate = || Visualization {
            z: z.clone(),
            image: eval.image.clone(),
            features: eval.features.clone(),
            probs: eval.probs.clone(),
            predicted,
            residual_before,
            residual: terms.features,
            best_step: step,
            constraint_met: true,
        };
        let ok = keep_class.is_none_or(|c| c == predicted);
        if ok && best.as_ref().is_none_or(|b| terms.features < b.residual) {
            best = Some(candidate());
        }
        if !ok && fallback.as_ref().is_none_or(|b| terms.features < b.residual) {
            fallback = Some(candidate());
        }
        if step < cfg.visual_steps {
            opt.step(&mut z, &grad)?;
        }
    }
    Ok(match best {
        Some(v) => v,
        None => Visualization { constraint_met: false, ..fallback.expect("at least one iterate") },
    })
}
