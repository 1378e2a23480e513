use serde::{Deserialize, Serialize};

use super::config::PieceConfig;
use super::latent::{LatentAdam, LatentModel, Objective};
use crate::net::one_hot;
use crate::tensor::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSelection {
    /// Class the classifier assigns to the original image.
    pub predicted: usize,
    pub counterfactual: usize,
    pub misclassified: bool,
    /// Ascent steps taken (0 for misclassified images).
    pub steps: usize,
    /// Probabilities on the probe just before and just after the class change.
    pub bracket: Option<(Vec<f64>, Vec<f64>)>,
}

/// Picks the counterfactual class: the true label for misclassified images,
/// otherwise the first other class reached by pushing the prediction away
/// from its one-hot encoding.
pub fn select_cf_class(
    model: &LatentModel,
    z: &[f64],
    image: &[f64],
    true_label: usize,
    cfg: &PieceConfig,
) -> Result<ClassSelection> {
    let probs = model.classifier.predict(image)?;
    let predicted = argmax(&probs);
    if true_label >= probs.len() {
        return Err(Error::Range(format!("label {true_label} outside {} classes", probs.len())));
    }
    if predicted != true_label {
        return Ok(ClassSelection { predicted, counterfactual: true_label, misclassified: true, steps: 0, bracket: None });
    }
    if cfg.ascent_max_steps == 0 {
        return Err(Error::Failed("counterfactual class search allows no steps".into()));
    }
    let y = one_hot(predicted, probs.len());
    let obj = Objective { probs: Some((&y, 1.0)), ..Default::default() };
    let mut probe = z.to_vec();
    let mut opt = LatentAdam::new(probe.len(), cfg.ascent_lr, true);
    let mut prev = probs;
    for step in 0..=cfg.ascent_max_steps {
        let (eval, _, grad) = model.objective(&probe, &obj)?;
        let reached = eval.predicted();
        if reached != predicted {
            return Ok(ClassSelection {
                predicted,
                counterfactual: reached,
                misclassified: false,
                steps: step,
                bracket: Some((prev, eval.probs)),
            });
        }
        if step == cfg.ascent_max_steps {
            return Err(Error::Failed(format!(
                "no decision boundary crossed in {} steps; final probabilities {:?}",
                cfg.ascent_max_steps, eval.probs
            )));
        }
        prev = eval.probs;
        opt.step(&mut probe, &grad)?;
    }
    unreachable!("loop returns on its last iteration")
}
