use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{HyperCube, Raster, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip_horizontal: f64,
    pub flip_vertical: f64,
    /// Draw a uniformly random multiple of 90 degrees.
    pub rotate: bool,
    /// Global multiplier range, applied to input and target.
    pub brightness: (f64, f64),
    /// Contrast factor range around the image mean, applied to the input only.
    pub contrast: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_horizontal: 0.5,
            flip_vertical: 0.5,
            rotate: true,
            brightness: (0.9, 1.1),
            contrast: (0.9, 1.1),
        }
    }
}

impl AugmentConfig {
    /// Leaves every sample untouched.
    pub fn identity() -> Self {
        Self { flip_horizontal: 0.0, flip_vertical: 0.0, rotate: false, brightness: (1.0, 1.0), contrast: (1.0, 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let range = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if prob(self.flip_horizontal) && prob(self.flip_vertical) && range(self.brightness) && range(self.contrast) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid augmentation settings {self:?}")))
        }
    }
}

/// The random choices behind one augmented sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub quarter_turns: usize,
    pub brightness: f64,
    pub contrast: f64,
}

impl AugmentDraw {
    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let factor = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        Self {
            flip_horizontal: rng.random_bool(cfg.flip_horizontal),
            flip_vertical: rng.random_bool(cfg.flip_vertical),
            quarter_turns: if cfg.rotate { rng.random_range(0..4) } else { 0 },
            brightness: factor(rng, cfg.brightness),
            contrast: factor(rng, cfg.contrast),
        }
    }

    pub fn apply(&self, rgb: &RgbImage, cube: &HyperCube) -> Result<(RgbImage, HyperCube)> {
        if rgb.height() != cube.height() || rgb.width() != cube.width() {
            return Err(Error::dimension(
                "augment",
                format!("rgb {:?} and cube {:?} are not spatially aligned", rgb.shape(), cube.shape()),
            ));
        }
        let geometric = |r: &Raster| {
            let mut r = if self.flip_horizontal { r.flip_horizontal() } else { r.clone() };
            if self.flip_vertical {
                r = r.flip_vertical();
            }
            r.rotate90(self.quarter_turns)
        };
        let (mut rgb, mut cube) = (geometric(rgb), geometric(cube));
        if self.brightness != 1.0 {
            let b = self.brightness as f32;
            rgb.data_mut().iter_mut().for_each(|v| *v *= b);
            cube.data_mut().iter_mut().for_each(|v| *v *= b);
        }
        if self.contrast != 1.0 {
            let n = rgb.data().len() as f64;
            let mean = (rgb.data().iter().map(|&v| v as f64).sum::<f64>() / n) as f32;
            let c = self.contrast as f32;
            rgb.data_mut().iter_mut().for_each(|v| *v = (*v - mean) * c + mean);
        }
        Ok((rgb, cube))
    }
}

/// Flips, right-angle rotation and brightness hit both rasters identically;
/// contrast jitter only touches the RGB input.
pub fn augment(
    rgb: &RgbImage,
    cube: &HyperCube,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(RgbImage, HyperCube)> {
    AugmentDraw::sample(cfg, rng).apply(rgb, cube)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_noop() {
        let rgb = Raster::new(3, 2, 2, (0..12).map(|v| v as f32 / 12.0).collect()).unwrap();
        let cube = Raster::new(31, 2, 2, (0..124).map(|v| v as f32).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = augment(&rgb, &cube, &AugmentConfig::identity(), &mut rng).unwrap();
        assert_eq!((a, b), (rgb, cube));
    }

    #[test]
    fn misaligned_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = augment(&Raster::zeros(3, 4, 4), &Raster::zeros(31, 4, 5), &AugmentConfig::default(), &mut rng);
        assert!(r.is_err());
    }
}
