use serde::{Deserialize, Serialize};

use crate::hurdle::{ExceptionalFeature, Rule};
use crate::net::Network;
use crate::tensor::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// Apply every eligible replacement.
    ApplyAll,
    /// Apply replacements while the prediction stays on this class.
    KeepClass { class: usize },
    /// Apply the first `count` eligible replacements.
    Budget { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AllApplied,
    /// The next replacement would have changed the predicted class.
    BoundaryReached,
    BudgetExhausted,
    NoEligibleFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationStep {
    pub neuron: usize,
    pub rule: Rule,
    pub probability: f64,
    pub weight: f64,
    pub old: f64,
    pub new: f64,
    /// Class probabilities after this replacement.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    pub x_prime: Vec<f64>,
    pub probs_before: Vec<f64>,
    pub steps: Vec<ModificationStep>,
    pub eligible: usize,
    pub termination: Termination,
}

impl Modification {
    pub fn probs_after(&self) -> &[f64] {
        self.steps.last().map_or(&self.probs_before, |s| &s.probs)
    }

    pub fn applied_neurons(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.neuron).collect()
    }
}

/// Whether resetting a feature flagged by `rule` moves evidence toward the
/// class whose logit has weight `weight` on that feature.
pub fn is_eligible(weight: f64, rule: Rule) -> bool {
    if weight > 0.0 {
        matches!(rule, Rule::E1 | Rule::E2 | Rule::E3)
    } else if weight < 0.0 {
        matches!(rule, Rule::E2 | Rule::E4)
    } else {
        false
    }
}

/// Walks the exceptional list in order and resets eligible features to their
/// expected values. A neuron is replaced at most once.
pub fn modify_features(
    x: &[f64],
    exceptional: &[ExceptionalFeature],
    weights: &[f64],
    stop: StopRule,
    classifier: &Network,
) -> Result<Modification> {
    if weights.len() != x.len() {
        return Err(Error::dim("counterfactual-class weights", x.len(), weights.len()));
    }
    let probs_before = classifier.head_probs(x)?;
    let mut x_prime = x.to_vec();
    let mut done = vec![false; x.len()];
    let mut steps: Vec<ModificationStep> = Vec::new();
    let mut eligible = 0;
    let mut termination = Termination::AllApplied;
    for feat in exceptional {
        let i = feat.neuron;
        if i >= x.len() {
            return Err(Error::Range(format!("exceptional neuron {i} outside {} features", x.len())));
        }
        if done[i] || !is_eligible(weights[i], feat.rule) {
            continue;
        }
        eligible += 1;
        if let StopRule::Budget { count } = stop {
            if steps.len() >= count {
                termination = Termination::BudgetExhausted;
                continue;
            }
        }
        if termination != Termination::AllApplied {
            continue;
        }
        let old = x_prime[i];
        x_prime[i] = feat.replacement;
        let probs = classifier.head_probs(&x_prime)?;
        if let StopRule::KeepClass { class } = stop {
            if argmax(&probs) != class {
                x_prime[i] = old;
                termination = Termination::BoundaryReached;
                continue;
            }
        }
        done[i] = true;
        steps.push(ModificationStep {
            neuron: i,
            rule: feat.rule,
            probability: feat.probability,
            weight: weights[i],
            old,
            new: feat.replacement,
            probs,
        });
    }
    if eligible == 0 {
        termination = Termination::NoEligibleFeatures;
    }
    Ok(Modification { x_prime, probs_before, steps, eligible, termination })
}
