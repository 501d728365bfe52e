use mxr_tensor::ops::concat_channels;
use mxr_tensor::{Float, Result, Tensor, TensorError};
use rand::Rng;

use super::{join, ConvBnAct, ConvBnActSpec, Mode, Module, PixelShuffleUpsampler, Slot};

/// Upsample the incoming map 2x to half its width, blur, concatenate the
/// skip, then two 3x3 conv-bn-mish layers at the concatenated width.
pub struct UnetDecoderBlock<T: Float> {
    pub upsample: PixelShuffleUpsampler<T>,
    pub convs: [ConvBnAct<T>; 2],
    pub skip_channels: usize,
}

impl<T: Float> UnetDecoderBlock<T> {
    pub fn new(up_channels: usize, skip_channels: usize, blur: bool, rng: &mut impl Rng) -> Result<Self> {
        let half = (up_channels / 2).max(1);
        let upsample = PixelShuffleUpsampler::new(up_channels, half, 2, blur, rng)?;
        let width = half + skip_channels;
        let convs = [
            ConvBnAct::new(ConvBnActSpec::new(width, width, 3, 1), rng)?,
            ConvBnAct::new(ConvBnActSpec::new(width, width, 3, 1), rng)?,
        ];
        Ok(Self { upsample, convs, skip_channels })
    }

    pub fn out_channels(&self) -> usize {
        self.upsample.out_channels() + self.skip_channels
    }

    pub fn forward(&self, up_in: &Tensor<T>, skip: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (u, s) = (up_in.shape(), skip.shape());
        if u.len() != 4 || s.len() != 4 || u[2] * 2 != s[2] || u[3] * 2 != s[3] || u[0] != s[0] {
            return Err(TensorError::Dimension {
                op: "unet_decoder_block",
                detail: format!("input {u:?} must be exactly half the spatial size of skip {s:?}"),
            });
        }
        let up = self.upsample.forward(up_in)?;
        let mut y = concat_channels(&[&up, skip])?;
        for c in &self.convs {
            y = c.forward(&y, mode)?;
        }
        Ok(y)
    }
}

impl<T: Float> Module<T> for UnetDecoderBlock<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.upsample.visit(&join(prefix, "upsample"), f);
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&join(prefix, &format!("convs.{i}")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_matches_skip_resolution() {
        let block = UnetDecoderBlock::<f32>::new(8, 4, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let y = block
            .forward(&Tensor::ones(&[1, 8, 4, 4]), &Tensor::ones(&[1, 4, 8, 8]), Mode::Train)
            .unwrap();
        assert_eq!(y.shape(), &[1, 8, 8, 8]);
    }

    #[test]
    fn off_by_one_skip_rejected() {
        let block = UnetDecoderBlock::<f32>::new(8, 4, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = block.forward(&Tensor::ones(&[1, 8, 4, 4]), &Tensor::ones(&[1, 4, 9, 8]), Mode::Train);
        assert!(r.is_err());
    }
}
