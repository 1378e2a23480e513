use serde::{Deserialize, Serialize};

use super::dist::{Family, Location, Pdf};
use super::ks::{ks_p_value, ks_statistic};
use super::special::{digamma, trigamma};
use crate::{Error, Result};

/// Fewest positive samples for which a density is fitted.
pub const MIN_POSITIVE_SAMPLES: usize = 20;

/// 95% point of χ²(1), used to keep the Gamma shape only when it differs
/// significantly from the Exponential special case.
pub const NESTED_LR_CRITICAL: f64 = 3.841_458_820_694_124;

/// Relative gap left below the sample minimum by free-location fits.
pub const LOCATION_OFFSET: f64 = 1e-4;

pub const CANDIDATES: [(Family, Location); 6] = [
    (Family::Gaussian, Location::Free),
    (Family::Gaussian, Location::Zero),
    (Family::Gamma, Location::Free),
    (Family::Gamma, Location::Zero),
    (Family::Exponential, Location::Free),
    (Family::Exponential, Location::Zero),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub family: Family,
    pub location: Location,
    pub pdf: Option<Pdf>,
    pub ks_stat: f64,
    pub ks_p: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfFit {
    pub pdf: Pdf,
    pub ks_stat: f64,
    pub ks_p: f64,
    pub candidates: Vec<CandidateFit>,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    min: f64,
    max: f64,
}

fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (min, max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Moments { n, mean, min, max }
}

fn free_location(m: &Moments) -> f64 {
    m.min - LOCATION_OFFSET * (m.max - m.min)
}

/// Gamma MLE on strictly positive data. Returns `(shape, scale)`.
pub fn gamma_mle(ys: &[f64]) -> Result<(f64, f64)> {
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::InvalidParameter("gamma MLE needs positive data".into()));
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let mean_log = ys.iter().map(|y| y.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Degenerate(format!("gamma log-moment gap {s}")));
    }
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let mut next = k - f / df;
        if !(next > 0.0) {
            next = k / 2.0;
        }
        let done = ((next - k) / k).abs() < 1e-12;
        k = next;
        if done {
            return Ok((k, mean / k));
        }
    }
    Err(Error::Failed(format!("gamma shape Newton did not converge (k={k})")))
}

fn gamma_log_likelihood(ys: &[f64], shape: f64, scale: f64) -> f64 {
    let n = ys.len() as f64;
    let c = -n * (statrs::function::gamma::ln_gamma(shape) + shape * scale.ln());
    c + ys.iter().map(|y| (shape - 1.0) * y.ln() - y / scale).sum::<f64>()
}

fn exponential_log_likelihood(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    -n * (mean.ln() + 1.0)
}

fn fit_candidate(xs: &[f64], m: &Moments, family: Family, location: Location) -> Result<Pdf> {
    let pdf = match (family, location) {
        (Family::Gaussian, Location::Free) => {
            let var = xs.iter().map(|x| (x - m.mean).powi(2)).sum::<f64>() / m.n;
            Pdf::Gaussian { mean: m.mean, std: var.sqrt() }
        }
        (Family::Gaussian, Location::Zero) => {
            let ms = xs.iter().map(|x| x * x).sum::<f64>() / m.n;
            Pdf::HalfGaussian { std: ms.sqrt() }
        }
        (Family::Gamma, loc_kind) => {
            let loc = if loc_kind == Location::Free { free_location(m) } else { 0.0 };
            let ys: Vec<f64> = xs.iter().map(|x| x - loc).collect();
            let (shape, scale) = gamma_mle(&ys)?;
            let lr = 2.0 * (gamma_log_likelihood(&ys, shape, scale) - exponential_log_likelihood(&ys));
            if lr < NESTED_LR_CRITICAL {
                return Err(Error::Degenerate(format!(
                    "shape {shape:.4} not distinguishable from exponential (LR {lr:.3})"
                )));
            }
            Pdf::Gamma { shape, scale, loc }
        }
        (Family::Exponential, loc_kind) => {
            let loc = if loc_kind == Location::Free { free_location(m) } else { 0.0 };
            Pdf::Exponential { rate: 1.0 / (m.mean - loc), loc }
        }
    };
    if pdf.is_valid() {
        Ok(pdf)
    } else {
        Err(Error::Degenerate(format!("invalid parameters {pdf:?}")))
    }
}

/// Fit all six candidates and keep the one with the largest KS p-value.
/// Earlier candidates win exact ties. A Gamma candidate is dropped when a
/// likelihood-ratio test cannot tell it from the Exponential at the same
/// location.
pub fn fit_pdf(samples: &[f64]) -> Result<PdfFit> {
    if samples.len() < MIN_POSITIVE_SAMPLES {
        return Err(Error::Degenerate(format!(
            "{} positive samples, need {MIN_POSITIVE_SAMPLES}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-positive sample {bad}")));
    }
    let m = moments(samples);
    if m.max == m.min {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let candidates: Vec<CandidateFit> = CANDIDATES
        .iter()
        .map(|&(family, location)| match fit_candidate(samples, &m, family, location) {
            Ok(pdf) => {
                let d = ks_statistic(&sorted, |x| pdf.cdf(x));
                CandidateFit {
                    family,
                    location,
                    pdf: Some(pdf),
                    ks_stat: d,
                    ks_p: ks_p_value(d, sorted.len()),
                    note: None,
                }
            }
            Err(e) => CandidateFit {
                family,
                location,
                pdf: None,
                ks_stat: f64::NAN,
                ks_p: f64::NAN,
                note: Some(e.to_string()),
            },
        })
        .collect();

    let best = candidates
        .iter()
        .filter(|c| c.pdf.is_some() && c.ks_p.is_finite())
        .fold(None::<&CandidateFit>, |acc, c| match acc {
            Some(b) if b.ks_p >= c.ks_p => Some(b),
            _ => Some(c),
        });
    match best {
        Some(b) => Ok(PdfFit { pdf: b.pdf.unwrap(), ks_stat: b.ks_stat, ks_p: b.ks_p, candidates: candidates.clone() }),
        None => {
            let notes: Vec<String> = candidates.iter().filter_map(|c| c.note.clone()).collect();
            Err(Error::Degenerate(format!("no valid candidate: {}", notes.join("; "))))
        }
    }
}

/// Fraction of samples that are strictly positive.
pub fn fit_theta(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples".into()));
    }
    let q = samples.iter().filter(|&&x| x > 0.0).count();
    Ok(q as f64 / samples.len() as f64)
}
