use mxr_tensor::ops::{avg_pool2d, pixel_shuffle, PadMode, Padding};
use mxr_tensor::{init, Float, Result, Tensor};
use rand::Rng;

use super::{join, Conv2d, Module, Slot};

/// Size-preserving 2x2 mean filter: replicate one row on top and one column
/// on the left, then average with stride 1.
pub fn blur<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let pad = Padding { top: 1, left: 1, bottom: 0, right: 0 };
    avg_pool2d(x, 2, 1, PadMode::Replicate, pad)
}

/// Sub-pixel conv weight `[c_out*r*r, c_in, k, k]` in which each of the
/// `c_out` base filters drawn from `base_init` fills `r*r` consecutive
/// slots. Followed by a pixel shuffle, the layer starts out as
/// nearest-neighbour upsampling of the base convolution.
pub fn icnr_init<T: Float, R: Rng>(
    c_out: usize,
    c_in: usize,
    k: usize,
    r: usize,
    base_init: impl FnOnce(&[usize], &mut R) -> Result<Tensor<T>>,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let base = base_init(&[c_out, c_in, k, k], rng)?;
    let filter = c_in * k * k;
    let reps = r * r;
    let mut data = Vec::with_capacity(c_out * reps * filter);
    for f in base.data().chunks_exact(filter) {
        for _ in 0..reps {
            data.extend_from_slice(f);
        }
    }
    Tensor::from_vec(data, &[c_out * reps, c_in, k, k])
}

/// 1x1 sub-pixel convolution (ICNR-initialised), pixel shuffle, optional blur.
pub struct PixelShuffleUpsampler<T: Float> {
    pub conv: Conv2d<T>,
    pub scale: usize,
    pub blur: bool,
}

impl<T: Float> PixelShuffleUpsampler<T> {
    pub fn new(in_channels: usize, out_channels: usize, scale: usize, blur: bool, rng: &mut impl Rng) -> Result<Self> {
        let w = icnr_init(out_channels, in_channels, 1, scale, |s, r| init::kaiming_normal(s, r), rng)?;
        let b = Tensor::zeros(&[out_channels * scale * scale]);
        Ok(Self {
            conv: Conv2d::from_weights(w, Some(b), 1, 0),
            scale,
            blur,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels() / (self.scale * self.scale)
    }

    /// Conv and shuffle only.
    pub fn forward_unblurred(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        pixel_shuffle(&self.conv.forward(x)?, self.scale)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.forward_unblurred(x)?;
        if self.blur {
            blur(&y)
        } else {
            Ok(y)
        }
    }
}

impl<T: Float> Module<T> for PixelShuffleUpsampler<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.conv.visit(&join(prefix, "conv"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blur_hand_case() {
        let x = Tensor::<f64>::from_vec(vec![0.0, 4.0, 8.0, 12.0], &[1, 1, 2, 2]).unwrap();
        assert_eq!(blur(&x).unwrap().data(), &[0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn blur_single_pixel_and_constants() {
        let x = Tensor::<f64>::from_vec(vec![3.5], &[1, 1, 1, 1]).unwrap();
        assert_eq!(blur(&x).unwrap().data(), &[3.5]);
        let c = Tensor::<f64>::full(&[2, 3, 5, 4], -1.25);
        let twice = blur(&blur(&c).unwrap()).unwrap();
        assert!(twice.data().iter().all(|&v| v == -1.25));
    }

    #[test]
    fn icnr_scale_one_is_base_draw() {
        let base = |s: &[usize], r: &mut ChaCha8Rng| init::normal::<f64>(s, 1.0, r);
        let a = icnr_init(3, 2, 3, 1, base, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = init::normal::<f64>(&[3, 2, 3, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn icnr_slices_are_copies() {
        let base = |s: &[usize], r: &mut ChaCha8Rng| init::normal::<f64>(s, 1.0, r);
        let w = icnr_init(2, 3, 1, 2, base, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(w.shape(), &[8, 3, 1, 1]);
        for c in 0..2 {
            let first = &w.data()[c * 12..c * 12 + 3];
            for s in 1..4 {
                assert_eq!(&w.data()[c * 12 + s * 3..c * 12 + s * 3 + 3], first);
            }
        }
    }
}
