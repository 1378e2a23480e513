use serde::{Deserialize, Serialize};

use super::dist::Pdf;
use super::fit::{fit_pdf, PdfFit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted { pdf: Pdf, ks_stat: f64, ks_p: f64 },
    Degenerate { reason: String },
}

/// Hurdle model of one neuron within one class: a point mass at zero with
/// weight `1 - theta` and a fitted density over the positive activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronClassModel {
    pub m: usize,
    pub q: usize,
    pub theta: f64,
    pub fit: FitOutcome,
    /// Empirical mean of the positive activations, when there are any.
    pub positive_mean: Option<f64>,
}

impl NeuronClassModel {
    /// Fit from every activation of the neuron observed in the class.
    pub fn fit(samples: &[f64]) -> Self {
        let m = samples.len();
        let positives: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();
        let q = positives.len();
        let theta = if m == 0 { 0.0 } else { q as f64 / m as f64 };
        let positive_mean = (q > 0).then(|| positives.iter().sum::<f64>() / q as f64);
        let fit = if m == 0 {
            FitOutcome::Degenerate { reason: "no samples in class".into() }
        } else {
            match fit_pdf(&positives) {
                Ok(PdfFit { pdf, ks_stat, ks_p, .. }) => FitOutcome::Fitted { pdf, ks_stat, ks_p },
                Err(e) => FitOutcome::Degenerate { reason: e.to_string() },
            }
        };
        NeuronClassModel { m, q, theta, fit, positive_mean }
    }

    pub fn pdf(&self) -> Option<&Pdf> {
        match &self.fit {
            FitOutcome::Fitted { pdf, .. } => Some(pdf),
            FitOutcome::Degenerate { .. } => None,
        }
    }

    pub fn ks_p(&self) -> Option<f64> {
        match self.fit {
            FitOutcome::Fitted { ks_p, .. } => Some(ks_p),
            FitOutcome::Degenerate { .. } => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.pdf().is_none()
    }

    /// Mean of the fitted positive-part density.
    pub fn expected_value(&self) -> Result<f64> {
        match &self.fit {
            FitOutcome::Fitted { pdf, .. } => Ok(pdf.mean()),
            FitOutcome::Degenerate { reason } => Err(Error::Degenerate(reason.clone())),
        }
    }

    /// Value a flagged feature is reset to. Falls back to the empirical
    /// positive mean (or zero when the neuron never fired) without a density.
    pub fn replacement_value(&self) -> f64 {
        self.expected_value()
            .unwrap_or_else(|_| self.positive_mean.unwrap_or(0.0))
            .max(0.0)
    }

    /// Mixture CDF `P(X <= x)` including the point mass at zero.
    pub fn hurdle_cdf(&self, x: f64) -> Option<f64> {
        if x < 0.0 {
            return Some(0.0);
        }
        let pdf = self.pdf()?;
        Some((1.0 - self.theta) + self.theta * pdf.cdf(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Inactive where the class almost always fires.
    E1,
    /// Active where the class almost never fires.
    E2,
    /// Unusually low positive activation.
    E3,
    /// Unusually high positive activation.
    E4,
}

impl Rule {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rule::E1 => "E1",
            Rule::E2 => "E2",
            Rule::E3 => "E3",
            Rule::E4 => "E4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalFeature {
    pub neuron: usize,
    pub rule: Rule,
    pub probability: f64,
    pub observed: f64,
    pub replacement: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Exceptionality {
    /// Sorted by probability, then neuron, then rule.
    pub features: Vec<ExceptionalFeature>,
    /// Neurons whose density tests (E3, E4) were unavailable.
    pub skipped_degenerate: usize,
}

/// Rules fired by a single activation, with their tail probabilities.
pub fn rules_for(model: &NeuronClassModel, x: f64, alpha: f64) -> Vec<(Rule, f64)> {
    rule_probabilities(model.theta, model.pdf().map(|p| p.cdf(x)), x, alpha)
}

/// Core rule evaluation given `theta` and the positive-part CDF at `x`.
/// All comparisons are strict.
pub fn rule_probabilities(theta: f64, cdf: Option<f64>, x: f64, alpha: f64) -> Vec<(Rule, f64)> {
    let mut out = Vec::new();
    if x <= 0.0 {
        let p = 1.0 - theta;
        if p < alpha {
            out.push((Rule::E1, p));
        }
        return out;
    }
    if theta < alpha {
        out.push((Rule::E2, theta));
    }
    if let Some(f) = cdf {
        let low = theta * f;
        if low < alpha {
            out.push((Rule::E3, low));
        }
        let high = theta * (1.0 - f);
        if high < alpha {
            out.push((Rule::E4, high));
        }
    }
    out
}

/// Flag every exceptional feature of `x` against one class's models.
pub fn classify_exceptional(x: &[f64], models: &[NeuronClassModel], alpha: f64) -> Result<Exceptionality> {
    if x.len() != models.len() {
        return Err(Error::dim("classify_exceptional", models.len(), x.len()));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    let mut result = Exceptionality::default();
    for (neuron, (&xi, model)) in x.iter().zip(models).enumerate() {
        if model.m == 0 {
            result.skipped_degenerate += 1;
            continue;
        }
        if model.is_degenerate() && xi > 0.0 {
            result.skipped_degenerate += 1;
        }
        for (rule, probability) in rules_for(model, xi, alpha) {
            result.features.push(ExceptionalFeature {
                neuron,
                rule,
                probability,
                observed: xi,
                replacement: model.replacement_value(),
            });
        }
    }
    result.features.sort_by(|a, b| {
        a.probability
            .total_cmp(&b.probability)
            .then(a.neuron.cmp(&b.neuron))
            .then(a.rule.cmp(&b.rule))
    });
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(theta: f64, pdf: Option<Pdf>) -> NeuronClassModel {
        let m = 1000;
        let q = (theta * m as f64).round() as usize;
        NeuronClassModel {
            m,
            q,
            theta: q as f64 / m as f64,
            fit: match pdf {
                Some(pdf) => FitOutcome::Fitted { pdf, ks_stat: 0.01, ks_p: 0.9 },
                None => FitOutcome::Degenerate { reason: "test".into() },
            },
            positive_mean: (q > 0).then_some(1.0),
        }
    }

    #[test]
    fn forced_e1() {
        let r = rule_probabilities(0.97, Some(0.5), 0.0, 0.05);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, Rule::E1);
        assert!((r[0].1 - 0.03).abs() < 1e-15);
    }

    #[test]
    fn forced_e2() {
        let r = rule_probabilities(0.02, Some(0.5), 1.4, 0.05);
        assert_eq!(r[0], (Rule::E2, 0.02));
    }

    #[test]
    fn tails_with_certain_activation() {
        assert_eq!(rule_probabilities(1.0, Some(0.01), 1.0, 0.05), vec![(Rule::E3, 0.01)]);
        let r = rule_probabilities(1.0, Some(0.99), 1.0, 0.05);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, Rule::E4);
        assert!((r[0].1 - 0.01).abs() < 1e-12);
    }

    #[test]
    fn exactly_alpha_is_not_exceptional() {
        assert!(rule_probabilities(0.95, None, 0.0, 0.05).is_empty() || 1.0 - 0.95 < 0.05);
        assert!(rule_probabilities(0.05, None, 1.0, 0.05).is_empty());
        assert!(rule_probabilities(1.0, Some(0.05), 1.0, 0.05).is_empty());
        assert!(rule_probabilities(0.5, Some(0.1), 1.0, 0.05).is_empty());
    }

    #[test]
    fn degenerate_keeps_theta_rules() {
        let m = model(0.01, None);
        let out = classify_exceptional(&[2.0], &[m], 0.05).unwrap();
        assert_eq!(out.features.len(), 1);
        assert_eq!(out.features[0].rule, Rule::E2);
        assert_eq!(out.skipped_degenerate, 1);
        assert_eq!(out.features[0].replacement, 1.0);
    }

    #[test]
    fn sorted_by_probability_then_neuron() {
        let pdf = Pdf::Exponential { rate: 1.0, loc: 0.0 };
        let models = vec![model(0.99, Some(pdf)), model(0.99, Some(pdf)), model(0.02, Some(pdf))];
        let out = classify_exceptional(&[0.0, 0.0, 0.5], &models, 0.05).unwrap();
        let keys: Vec<(usize, Rule)> = out.features.iter().map(|f| (f.neuron, f.rule)).collect();
        assert_eq!(keys[0], (2, Rule::E3));
        assert_eq!(&keys[1..], &[(0, Rule::E1), (1, Rule::E1), (2, Rule::E4), (2, Rule::E2)]);
    }

    #[test]
    fn rejects_bad_alpha_and_length() {
        let m = model(0.5, None);
        assert!(classify_exceptional(&[1.0], &[m.clone()], 0.5).is_err());
        assert!(classify_exceptional(&[1.0, 2.0], &[m], 0.05).is_err());
    }

    #[test]
    fn fit_from_samples() {
        let mut s = vec![0.0; 30];
        s.extend((1..=70).map(|i| i as f64 * 0.1));
        let m = NeuronClassModel::fit(&s);
        assert_eq!((m.m, m.q), (100, 70));
        assert_eq!(m.theta, 0.7);
        assert!(!m.is_degenerate());
        assert!(m.expected_value().unwrap() > 0.0);
    }
}
