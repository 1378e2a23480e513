use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    HorizontalBar,
    Cross,
    Ring,
    DiagonalStroke,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 4] = [
        ShapeFamily::HorizontalBar,
        ShapeFamily::Cross,
        ShapeFamily::Ring,
        ShapeFamily::DiagonalStroke,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlyphParams {
    pub side: usize,
    pub n_classes: usize,
    pub families: Vec<ShapeFamily>,
    /// Maximum translation in pixels along each axis.
    pub max_shift: f64,
    pub thickness: (f64, f64),
    pub intensity: (f64, f64),
    pub noise_sigma: f64,
    /// Half-length of strokes (and ring radius), in pixels.
    pub extent: (f64, f64),
    pub seed: u64,
}

impl Default for GlyphParams {
    fn default() -> Self {
        Self {
            side: 16,
            n_classes: 4,
            families: ShapeFamily::ALL.to_vec(),
            max_shift: 2.0,
            thickness: (1.0, 3.0),
            intensity: (0.7, 1.0),
            noise_sigma: 0.05,
            extent: (3.5, 5.0),
            seed: 7,
        }
    }
}

impl GlyphParams {
    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes > self.families.len() {
            return Err(Error::InvalidParameter(format!(
                "n_classes {} needs between 2 and {} shape families",
                self.n_classes,
                self.families.len()
            )));
        }
        let ordered = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi;
        if !ordered(self.thickness) || !ordered(self.extent) || !ordered(self.intensity) {
            return Err(Error::InvalidParameter("jitter ranges must satisfy 0 < lo <= hi".into()));
        }
        if self.intensity.1 > 1.0 || self.noise_sigma < 0.0 || self.max_shift < 0.0 {
            return Err(Error::InvalidParameter("intensity must be <= 1, noise and shift >= 0".into()));
        }
        // Smallest glyph must still fit around the frame centre.
        let half_frame = (self.side as f64 - 1.0) / 2.0;
        if self.extent.0 + self.thickness.1 / 2.0 + 0.5 > half_frame {
            return Err(Error::InvalidParameter(format!(
                "glyph of extent {} and thickness {} does not fit a {}px frame",
                self.extent.0, self.thickness.1, self.side
            )));
        }
        Ok(())
    }
}

fn split_seed(seed: u64, split: Split) -> u64 {
    match split {
        Split::Train => seed,
        Split::Test => seed ^ 0x9E37_79B9_7F4A_7C15,
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Distance from `p` to an arc of radius `r` around `c` covering `coverage`
/// of the full turn, starting at angle `start`.
fn arc_distance(p: (f64, f64), c: (f64, f64), r: f64, start: f64, coverage: f64) -> f64 {
    let (dx, dy) = (p.0 - c.0, p.1 - c.1);
    let tau = std::f64::consts::TAU;
    let angle = (dy.atan2(dx) - start).rem_euclid(tau);
    if angle <= coverage * tau {
        return ((dx * dx + dy * dy).sqrt() - r).abs();
    }
    let end = start + coverage * tau;
    let e1 = (c.0 + r * start.cos(), c.1 + r * start.sin());
    let e2 = (c.0 + r * end.cos(), c.1 + r * end.sin());
    let d1 = ((p.0 - e1.0).powi(2) + (p.1 - e1.1).powi(2)).sqrt();
    let d2 = ((p.0 - e2.0).powi(2) + (p.1 - e2.1).powi(2)).sqrt();
    d1.min(d2)
}

fn draw_glyph(family: ShapeFamily, params: &GlyphParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let side = params.side;
    let half_frame = (side as f64 - 1.0) / 2.0;
    let thickness = rng.random_range(params.thickness.0..=params.thickness.1);
    let intensity = rng.random_range(params.intensity.0..=params.intensity.1);
    let extent = rng.random_range(params.extent.0..=params.extent.1);

    // Shrink the admissible shift so the glyph, its stroke and the soft edge
    // stay inside the frame.
    let reach = extent + thickness / 2.0 + 0.5;
    let room = (half_frame - reach).max(0.0).min(params.max_shift);
    let cx = half_frame + if room > 0.0 { rng.random_range(-room..=room) } else { 0.0 };
    let cy = half_frame + if room > 0.0 { rng.random_range(-room..=room) } else { 0.0 };

    // Family-specific variation that makes neighbouring classes overlap a bit.
    let arm = extent * rng.random_range(0.35..=1.0);
    let coverage = rng.random_range(0.65..=1.0);
    let start = rng.random_range(0.0..std::f64::consts::TAU);

    let mut img = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            let p = (x as f64, y as f64);
            let d = match family {
                ShapeFamily::HorizontalBar => {
                    segment_distance(p, (cx - extent, cy), (cx + extent, cy))
                }
                ShapeFamily::Cross => segment_distance(p, (cx - extent, cy), (cx + extent, cy))
                    .min(segment_distance(p, (cx, cy - arm), (cx, cy + arm))),
                ShapeFamily::Ring => arc_distance(p, (cx, cy), extent, start, coverage),
                ShapeFamily::DiagonalStroke => {
                    let k = extent / std::f64::consts::SQRT_2 * 1.3;
                    segment_distance(p, (cx - k, cy - k), (cx + k, cy + k))
                }
            };
            let coverage_px = (thickness / 2.0 + 0.5 - d).clamp(0.0, 1.0);
            img[y * side + x] = intensity * coverage_px;
        }
    }
    img
}

/// Class-balanced procedural glyph dataset, fully determined by
/// `(params, n_per_class, split)`.
pub fn make_glyphs(params: &GlyphParams, n_per_class: usize, split: Split) -> Result<Dataset> {
    params.validate()?;
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(params.seed, split));
    let noise = Normal::new(0.0, params.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let side = params.side;
    let n = n_per_class * params.n_classes;
    let mut data = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n_per_class {
        for class in 0..params.n_classes {
            let mut img = draw_glyph(params.families[class], params, &mut rng);
            if params.noise_sigma > 0.0 {
                for v in img.iter_mut() {
                    *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            data.extend(img);
            labels.push(class);
        }
    }
    Dataset::new(
        Tensor::new(vec![n, side, side], data)?,
        labels,
        params.n_classes,
        split,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = GlyphParams::default();
        let a = make_glyphs(&p, 5, Split::Train).unwrap();
        let b = make_glyphs(&p, 5, Split::Train).unwrap();
        assert_eq!(a, b);
        let c = make_glyphs(&p, 5, Split::Test).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn class_balanced_counts() {
        let d = make_glyphs(&GlyphParams::default(), 250, Split::Train).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.class_counts(), vec![250; 4]);
    }

    #[test]
    fn oversized_stroke_is_rejected() {
        let p = GlyphParams {
            thickness: (1.0, 9.0),
            ..GlyphParams::default()
        };
        assert!(matches!(make_glyphs(&p, 1, Split::Train), Err(Error::InvalidParameter(_))));
        assert!(make_glyphs(&GlyphParams::default(), 0, Split::Train).is_err());
    }

    #[test]
    fn glyphs_stay_inside_frame() {
        // Without noise the border ring must be empty.
        let p = GlyphParams {
            noise_sigma: 0.0,
            ..GlyphParams::default()
        };
        let d = make_glyphs(&p, 50, Split::Train).unwrap();
        let s = p.side;
        for i in 0..d.len() {
            let img = d.image(i);
            for k in 0..s {
                for &(x, y) in &[(k, 0), (k, s - 1), (0, k), (s - 1, k)] {
                    assert_eq!(img[y * s + x], 0.0, "image {i} touches the border");
                }
            }
        }
    }
}
