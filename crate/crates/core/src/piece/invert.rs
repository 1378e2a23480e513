use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::PieceConfig;
use super::latent::{LatentAdam, LatentModel, Objective};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub z: Vec<f64>,
    /// Layer-X features of the image itself, the vector the explanation edits.
    pub x: Vec<f64>,
    pub reconstruction: Vec<f64>,
    /// Layer-X features of `G(z)`.
    pub reconstruction_features: Vec<f64>,
    pub feature_loss: f64,
    pub pixel_loss: f64,
    /// Final combined loss of every restart; `None` for aborted restarts.
    pub restart_losses: Vec<Option<f64>>,
}

impl Inversion {
    pub fn loss(&self) -> f64 {
        self.feature_loss + self.pixel_loss
    }
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Finds `z` with `G(z)` close to the image both in pixels and in the
/// classifier's feature space, from several standard-normal starts.
pub fn invert_image(model: &LatentModel, image: &[f64], cfg: &PieceConfig, seed: u64) -> Result<Inversion> {
    let target_x = model.classifier.features(image)?;
    let obj = Objective { features: Some((&target_x, 1.0)), pixels: Some((image, 1.0)), probs: None };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut restart_losses = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed, r));
        let mut z: Vec<f64> = (0..model.latent_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut opt = LatentAdam::new(z.len(), cfg.invert_lr, false);
        let run = (|| -> Result<f64> {
            for _ in 0..cfg.invert_steps {
                let (_, _, grad) = model.objective(&z, &obj)?;
                opt.step(&mut z, &grad)?;
            }
            Ok(model.objective(&z, &obj)?.1.total)
        })();
        match run {
            Ok(loss) => {
                restart_losses.push(Some(loss));
                if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                    best = Some((loss, z));
                }
            }
            Err(_) => restart_losses.push(None),
        }
    }
    let (_, z) = best.ok_or_else(|| Error::NonFinite("every inversion restart diverged".into()))?;
    let (eval, terms, _) = model.objective(&z, &obj)?;
    Ok(Inversion {
        z,
        x: target_x,
        reconstruction: eval.image,
        reconstruction_features: eval.features,
        feature_loss: terms.features,
        pixel_loss: terms.pixels,
        restart_losses,
    })
}
