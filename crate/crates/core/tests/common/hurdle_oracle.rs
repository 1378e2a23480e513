//! Sampling and empirical-CDF oracles for the hurdle fitting code.
#![allow(dead_code)]

use piece_core::hurdle::{Family, Location, Pdf, CANDIDATES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};

/// Draw `n` positive samples from a fixed generator for candidate `kind`
/// (same order as `CANDIDATES`).
pub fn sample_candidate(kind: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(kind as u64));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: f64 = match kind {
            0 => Normal::new(5.0, 1.0).unwrap().sample(&mut rng),
            1 => Normal::new(0.0f64, 1.5).unwrap().sample(&mut rng).abs(),
            2 => Gamma::new(3.0, 0.5).unwrap().sample(&mut rng) + 1.0,
            3 => Gamma::new(2.5, 1.0).unwrap().sample(&mut rng),
            4 => Exp::new(2.0).unwrap().sample(&mut rng) + 0.5,
            _ => Exp::new(2.0).unwrap().sample(&mut rng),
        };
        if x > 0.0 {
            out.push(x);
        }
    }
    out
}

pub fn generating_family(kind: usize) -> (Family, Location) {
    CANDIDATES[kind]
}

/// Relative error of the Gaussian parameters against the generators above.
pub fn gaussian_param_error(kind: usize, pdf: &Pdf) -> Option<f64> {
    match (kind, pdf) {
        (0, Pdf::Gaussian { mean, std }) => Some(((mean - 5.0) / 5.0).abs().max((std - 1.0).abs())),
        (1, Pdf::HalfGaussian { std }) => Some(((std - 1.5) / 1.5).abs()),
        _ => None,
    }
}

/// Composite Simpson rule on `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// ∫ pdf over its support, using `x = start + e^t` for one-sided supports so
/// a singular density at the left edge stays integrable.
pub fn integrate_pdf(pdf: &Pdf) -> f64 {
    match *pdf {
        Pdf::Gaussian { mean, std } => simpson(|x| pdf.pdf(x), mean - 14.0 * std, mean + 14.0 * std, 40_000),
        _ => {
            let start = pdf.support_start();
            let mut hi = 1.0f64;
            while pdf.pdf(start + hi) > 1e-300 && hi < 1e6 && pdf.sf(start + hi) > 1e-17 {
                hi *= 2.0;
            }
            simpson(|t| pdf.pdf(start + t.exp()) * t.exp(), -60.0, hi.ln(), 40_000)
        }
    }
}

/// Rules fired under the empirical positive-part CDF. Independent of the
/// library's rule code.
pub fn empirical_rules(theta: f64, sorted_pos: &[f64], x: f64, alpha: f64) -> Vec<&'static str> {
    let mut fired = Vec::new();
    if x == 0.0 {
        if 1.0 - theta < alpha {
            fired.push("E1");
        }
        return fired;
    }
    let below = sorted_pos.partition_point(|&v| v <= x) as f64;
    let f = below / sorted_pos.len() as f64;
    if theta < alpha {
        fired.push("E2");
    }
    if theta * f < alpha {
        fired.push("E3");
    }
    if (1.0 - theta) + theta * f > 1.0 - alpha {
        fired.push("E4");
    }
    fired
}

/// Probe points: zero, mid-cell empirical quantiles, and points outside the
/// observed range.
pub fn probe_grid(sorted_pos: &[f64]) -> Vec<f64> {
    let q = sorted_pos.len();
    let mut grid = vec![0.0];
    for k in 0..40 {
        let level = (k as f64 + 0.5) / 40.0;
        grid.push(sorted_pos[((level * q as f64) as usize).min(q - 1)]);
    }
    grid.push(sorted_pos[q - 1] * 1.5);
    grid
}

/// Draw `m` activations from a hurdle with positive part from `kind`.
pub fn hurdle_samples(theta: f64, kind: usize, m: usize, seed: u64) -> Vec<f64> {
    let pos = sample_candidate(kind, m, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let bern = rand_distr::Bernoulli::new(theta).unwrap();
    pos.into_iter().map(|x| if bern.sample(&mut rng) { x } else { 0.0 }).collect()
}
