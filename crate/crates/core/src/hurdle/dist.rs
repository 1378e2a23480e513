use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use super::special::std_normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Gamma,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Free,
    Zero,
}

/// A fitted density for the positive part of a hurdle model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pdf {
    /// N(mean, std²) on the real line.
    Gaussian { mean: f64, std: f64 },
    /// Gaussian with its location pinned at 0, restricted to x ≥ 0.
    HalfGaussian { std: f64 },
    Gamma { shape: f64, scale: f64, loc: f64 },
    Exponential { rate: f64, loc: f64 },
}

impl Pdf {
    pub fn family(&self) -> Family {
        match self {
            Pdf::Gaussian { .. } | Pdf::HalfGaussian { .. } => Family::Gaussian,
            Pdf::Gamma { .. } => Family::Gamma,
            Pdf::Exponential { .. } => Family::Exponential,
        }
    }

    pub fn location(&self) -> Location {
        match *self {
            Pdf::Gaussian { .. } => Location::Free,
            Pdf::HalfGaussian { .. } => Location::Zero,
            Pdf::Gamma { loc, .. } | Pdf::Exponential { loc, .. } => {
                if loc == 0.0 {
                    Location::Zero
                } else {
                    Location::Free
                }
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Pdf::Gaussian { mean, std } => mean.is_finite() && ok(std),
            Pdf::HalfGaussian { std } => ok(std),
            Pdf::Gamma { shape, scale, loc } => ok(shape) && ok(scale) && loc.is_finite(),
            Pdf::Exponential { rate, loc } => ok(rate) && loc.is_finite(),
        }
    }

    /// Lower end of the support (−∞ for the full Gaussian).
    pub fn support_start(&self) -> f64 {
        match *self {
            Pdf::Gaussian { .. } => f64::NEG_INFINITY,
            Pdf::HalfGaussian { .. } => 0.0,
            Pdf::Gamma { loc, .. } | Pdf::Exponential { loc, .. } => loc,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Pdf::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            }
            Pdf::HalfGaussian { std } => {
                if x < 0.0 {
                    return 0.0;
                }
                let z = x / std;
                2.0 * (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            }
            Pdf::Gamma { shape, scale, loc } => {
                let y = x - loc;
                if y <= 0.0 {
                    return 0.0;
                }
                ((shape - 1.0) * y.ln() - y / scale - ln_gamma(shape) - shape * scale.ln()).exp()
            }
            Pdf::Exponential { rate, loc } => {
                let y = x - loc;
                if y < 0.0 {
                    0.0
                } else {
                    rate * (-rate * y).exp()
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Pdf::Gaussian { mean, std } => std_normal_cdf((x - mean) / std),
            Pdf::HalfGaussian { std } => {
                if x <= 0.0 {
                    0.0
                } else {
                    statrs::function::erf::erf(x / (std * std::f64::consts::SQRT_2))
                }
            }
            Pdf::Gamma { shape, scale, loc } => {
                let y = x - loc;
                if y <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, y / scale)
                }
            }
            Pdf::Exponential { rate, loc } => {
                let y = x - loc;
                if y <= 0.0 {
                    0.0
                } else {
                    -(-rate * y).exp_m1()
                }
            }
        }
    }

    /// Survival function `1 - F(x)`, computed without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Pdf::Gaussian { mean, std } => std_normal_cdf(-(x - mean) / std),
            Pdf::HalfGaussian { std } => {
                if x <= 0.0 {
                    1.0
                } else {
                    statrs::function::erf::erfc(x / (std * std::f64::consts::SQRT_2))
                }
            }
            Pdf::Gamma { shape, scale, loc } => {
                let y = x - loc;
                if y <= 0.0 {
                    1.0
                } else {
                    gamma_ur(shape, y / scale)
                }
            }
            Pdf::Exponential { rate, loc } => {
                let y = x - loc;
                if y <= 0.0 {
                    1.0
                } else {
                    (-rate * y).exp()
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Pdf::Gaussian { mean, .. } => mean,
            Pdf::HalfGaussian { std } => std * (2.0 / std::f64::consts::PI).sqrt(),
            Pdf::Gamma { shape, scale, loc } => shape * scale + loc,
            Pdf::Exponential { rate, loc } => 1.0 / rate + loc,
        }
    }
}
