use serde::{Deserialize, Serialize};

use super::config::PieceConfig;
use super::invert::{invert_image, Inversion};
use super::latent::LatentModel;
use super::modify::{modify_features, Modification, StopRule, Termination};
use super::select::{select_cf_class, ClassSelection};
use super::visualize::{visualize, Visualization};
use crate::hurdle::{classify_exceptional, ExceptionalFeature, StatsTable};
use crate::tensor::argmax;
use crate::{Error, Result};

/// The fractions of the semi-factual edit budget used in the benchmarks.
pub const PROPORTIONAL_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExplanationMode {
    Counterfactual,
    /// Max-edit semi-factual.
    Semifactual,
    /// The first `⌈fraction · k⌉` replacements, `k` being the count applied
    /// by the max-edit semi-factual.
    Proportional { fraction: f64 },
}

impl ExplanationMode {
    pub fn validate(&self) -> Result<()> {
        if let ExplanationMode::Proportional { fraction } = *self {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidParameter(format!("fraction must lie in (0, 1], got {fraction}")));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            ExplanationMode::Counterfactual => "counterfactual".into(),
            ExplanationMode::Semifactual => "semifactual".into(),
            ExplanationMode::Proportional { fraction } => format!("proportional_{:.0}", fraction * 100.0),
        }
    }

    pub fn is_counterfactual(&self) -> bool {
        matches!(self, ExplanationMode::Counterfactual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationRequest {
    pub image: Vec<f64>,
    pub true_label: usize,
    pub mode: ExplanationMode,
    pub seed: u64,
    /// Use this counterfactual class instead of searching for one.
    pub counterfactual_override: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub latent: LatentModel<'a>,
    pub stats: &'a StatsTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResult {
    pub mode: ExplanationMode,
    pub true_label: usize,
    pub predicted: usize,
    pub counterfactual: usize,
    pub intended: usize,
    pub selection: ClassSelection,
    pub inversion: Inversion,
    pub exceptional: Vec<ExceptionalFeature>,
    pub skipped_degenerate: usize,
    /// Replacement count of the max-edit semi-factual, for proportional runs.
    pub reference_count: Option<usize>,
    pub modification: Modification,
    pub visualization: Visualization,
    /// Classifier prediction on the explanation image.
    pub image_predicted: usize,
    pub verified: bool,
}

impl ExplanationResult {
    pub fn image(&self) -> &[f64] {
        &self.visualization.image
    }

    pub fn z_prime(&self) -> &[f64] {
        &self.visualization.z
    }

    pub fn x_prime(&self) -> &[f64] {
        &self.modification.x_prime
    }

    pub fn termination(&self) -> Termination {
        self.modification.termination
    }

    /// `(p(c), p(c'))` before any replacement and after each one.
    pub fn probability_trace(&self) -> Vec<(f64, f64)> {
        let (c, cp) = (self.predicted, self.counterfactual);
        std::iter::once(&self.modification.probs_before)
            .chain(self.modification.steps.iter().map(|s| &s.probs))
            .map(|p| (p[c], p[cp]))
            .collect()
    }
}

/// Full pipeline for one image.
pub fn explain(models: &Models, cfg: &PieceConfig, req: &ExplanationRequest) -> Result<ExplanationResult> {
    cfg.validate()?;
    let inversion = invert_image(&models.latent, &req.image, cfg, req.seed).map_err(|e| e.at_stage("inversion"))?;
    let selection = match req.counterfactual_override {
        Some(cp) => {
            let predicted = argmax(&models.latent.classifier.predict(&req.image)?);
            if cp == predicted || cp >= models.stats.n_classes() {
                return Err(Error::InvalidParameter(format!("override class {cp} is invalid here")).at_stage("class selection"));
            }
            ClassSelection { predicted, counterfactual: cp, misclassified: predicted != req.true_label, steps: 0, bracket: None }
        }
        None => select_cf_class(&models.latent, &inversion.z, &req.image, req.true_label, cfg)
            .map_err(|e| e.at_stage("class selection"))?,
    };
    explain_from(models, cfg, req, inversion, selection)
}

/// The pipeline after inversion and class selection, so callers can share
/// those between modes.
pub fn explain_from(
    models: &Models,
    cfg: &PieceConfig,
    req: &ExplanationRequest,
    inversion: Inversion,
    selection: ClassSelection,
) -> Result<ExplanationResult> {
    req.mode.validate()?;
    let classifier = models.latent.classifier;
    let c = selection.predicted;
    let cp = selection.counterfactual;
    let exc = classify_exceptional(&inversion.x, models.stats.class(cp)?, cfg.alpha)
        .map_err(|e| e.at_stage("exceptional features"))?;
    let weights = classifier
        .head_dense()
        .ok_or_else(|| Error::InvalidParameter("classifier head has no dense layer".into()))?
        .weights_into(cp)
        .to_vec();
    let modify = |stop| {
        modify_features(&inversion.x, &exc.features, &weights, stop, classifier).map_err(|e| e.at_stage("feature modification"))
    };
    let (modification, reference_count) = match req.mode {
        ExplanationMode::Counterfactual => (modify(StopRule::ApplyAll)?, None),
        ExplanationMode::Semifactual => (modify(StopRule::KeepClass { class: c })?, None),
        ExplanationMode::Proportional { fraction } => {
            let k = modify(StopRule::KeepClass { class: c })?.steps.len();
            let count = (fraction * k as f64 - 1e-9).ceil().max(0.0) as usize;
            (modify(StopRule::Budget { count })?, Some(k))
        }
    };
    let intended = if req.mode.is_counterfactual() { cp } else { c };
    let keep = (!req.mode.is_counterfactual()).then_some(c);
    let visualization = visualize(&models.latent, &modification.x_prime, &inversion.z, cfg, keep)
        .map_err(|e| e.at_stage("visualization"))?;
    let image_predicted = argmax(&classifier.predict(&visualization.image)?);
    Ok(ExplanationResult {
        mode: req.mode,
        true_label: req.true_label,
        predicted: c,
        counterfactual: cp,
        intended,
        selection,
        inversion,
        exceptional: exc.features,
        skipped_degenerate: exc.skipped_degenerate,
        reference_count,
        modification,
        image_predicted,
        verified: image_predicted == intended,
        visualization,
    })
}
