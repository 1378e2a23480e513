use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::net::{Mode, Network};
use crate::tensor::{l1_distance, squared_distance};
use crate::{Error, Result};

/// Denominators below this make a ratio metric undefined.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation of the probability of `target` over
/// `passes` dropout-active forward passes; pass `i` uses seed `seed + i`.
pub fn mc_dropout(classifier: &Network, image: &[f64], target: usize, passes: usize, seed: u64) -> Result<McStats> {
    if !classifier.has_dropout() {
        return Err(Error::InvalidParameter("classifier has no dropout layer".into()));
    }
    if passes == 0 {
        return Err(Error::InvalidParameter("at least one pass is needed".into()));
    }
    if target >= classifier.output_dim() {
        return Err(Error::Range(format!("class {target} outside {} outputs", classifier.output_dim())));
    }
    let span = 0..classifier.layers().len();
    let values: Vec<f64> = (0..passes)
        .into_par_iter()
        .map(|i| {
            let t = classifier.forward_span(span.clone(), image, Mode::Train, Some(seed.wrapping_add(i as u64)))?;
            Ok(t.output().data()[target])
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McStats { mean, std: var.sqrt() })
}

/// Euclidean distance to the nearest row of `latents`.
pub fn nn_dist(x: &[f64], latents: &[Vec<f64>]) -> Result<f64> {
    if latents.is_empty() {
        return Err(Error::InvalidParameter("empty latent set".into()));
    }
    let mut best = f64::INFINITY;
    for row in latents {
        if row.len() != x.len() {
            return Err(Error::dim("latent row", x.len(), row.len()));
        }
        best = best.min(squared_distance(x, row));
    }
    Ok(best.sqrt())
}

fn recon_error(ae: &Network, image: &[f64]) -> Result<f64> {
    Ok(squared_distance(image, &ae.predict(image)?))
}

/// `‖I' − AE_c'(I')‖² / ‖I' − AE_c(I')‖²`; `None` when the denominator
/// vanishes.
pub fn im1(image: &[f64], ae_original: &Network, ae_counterfactual: &Network) -> Result<Option<f64>> {
    let num = recon_error(ae_counterfactual, image)?;
    let den = recon_error(ae_original, image)?;
    Ok((den >= DENOMINATOR_GUARD).then(|| num / den))
}

/// `‖AE_c'(I') − AE_full(I')‖² / ‖I'‖₁`; `None` when the denominator
/// vanishes.
pub fn im2(image: &[f64], ae_counterfactual: &Network, ae_full: &Network) -> Result<Option<f64>> {
    let den: f64 = image.iter().map(|v| v.abs()).sum();
    if den < DENOMINATOR_GUARD {
        return Ok(None);
    }
    let diff = squared_distance(&ae_counterfactual.predict(image)?, &ae_full.predict(image)?);
    Ok(Some(diff / den))
}

pub fn sf_l1(original: &[f64], explanation: &[f64]) -> Result<f64> {
    if original.len() != explanation.len() {
        return Err(Error::dim("semi-factual image", original.len(), explanation.len()));
    }
    Ok(l1_distance(original, explanation))
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::dim("correlation pairs", xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!("correlation needs at least 3 pairs, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Majority vote among the `k` nearest rows; ties go to the tied class with
/// the nearest member. Neighbours are ordered by distance, then index.
pub fn knn_predict(train: &[(&[f64], usize)], query: &[f64], k: usize, n_classes: usize) -> usize {
    let mut d: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, (x, _))| (squared_distance(x, query), i)).collect();
    let k = k.min(d.len()).max(1);
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut near = d[..k].to_vec();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; n_classes];
    for &(_, i) in &near {
        votes[train[i].1] += 1;
    }
    let top = *votes.iter().max().expect("at least one class");
    near.iter().map(|&(_, i)| train[i].1).find(|&c| votes[c] == top).expect("a voter")
}

pub fn knn_accuracy(train: &[(&[f64], usize)], test: &Dataset, k: usize) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidParameter("k-NN needs non-empty train and test sets".into()));
    }
    let correct = (0..test.len())
        .into_par_iter()
        .filter(|&i| knn_predict(train, test.image(i), k, test.n_classes) == test.labels[i])
        .count();
    Ok(correct as f64 / test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitutability {
    pub k: usize,
    /// Accuracy relative to the real training data, in percent.
    pub score: f64,
    pub accuracy: f64,
    pub reference_accuracy: f64,
    pub n_explanations: usize,
    /// Classes with no explanation; a non-empty list marks a partial score.
    pub missing_classes: Vec<usize>,
}

/// k-NN accuracy on `test` when trained on explanation images labelled with
/// their intended classes, as a percentage of the accuracy when trained on
/// `reference`.
pub fn substitutability(
    explanations: &[(Vec<f64>, usize)],
    reference: &Dataset,
    test: &Dataset,
    k: usize,
) -> Result<Substitutability> {
    let reference_rows: Vec<(&[f64], usize)> = (0..reference.len()).map(|i| (reference.image(i), reference.labels[i])).collect();
    let reference_accuracy = knn_accuracy(&reference_rows, test, k)?;
    substitutability_against(explanations, reference_accuracy, test, k)
}

/// As [`substitutability`] with a precomputed reference accuracy.
pub fn substitutability_against(
    explanations: &[(Vec<f64>, usize)],
    reference_accuracy: f64,
    test: &Dataset,
    k: usize,
) -> Result<Substitutability> {
    if let Some((img, _)) = explanations.iter().find(|(img, _)| img.len() != test.pixels()) {
        return Err(Error::dim("explanation image", test.pixels(), img.len()));
    }
    if reference_accuracy <= 0.0 {
        return Err(Error::Degenerate("reference k-NN accuracy is zero".into()));
    }
    let rows: Vec<(&[f64], usize)> = explanations.iter().map(|(img, c)| (img.as_slice(), *c)).collect();
    let accuracy = knn_accuracy(&rows, test, k)?;
    let missing_classes = (0..test.n_classes).filter(|c| !explanations.iter().any(|(_, l)| l == c)).collect();
    Ok(Substitutability {
        k,
        score: 100.0 * accuracy / reference_accuracy,
        accuracy,
        reference_accuracy,
        n_explanations: explanations.len(),
        missing_classes,
    })
}
