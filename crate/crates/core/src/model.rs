//! The MXR-U-Net family: xresnet encoder, two-conv bottleneck, four
//! sub-pixel decoder blocks (self-attention after the second), and a head
//! that re-injects the RGB input before the final projection.

use mxr_tensor::ops::concat_channels;
use mxr_tensor::{Float, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    build_mxresnet, join, BlockKind, Conv2d, ConvBnAct, ConvBnActSpec, Encoder, Mode, Module,
    PixelShuffleUpsampler, SelfAttention, Slot, UnetDecoderBlock, XResBlock, XResnetBlockSpec,
};

/// Spatial sizes must be multiples of this.
pub const SIZE_MULTIPLE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum EncoderDepth {
    D18,
    D34,
    D50,
}

impl EncoderDepth {
    pub const ALL: [EncoderDepth; 3] = [EncoderDepth::D18, EncoderDepth::D34, EncoderDepth::D50];

    pub fn layers(self) -> u32 {
        match self {
            EncoderDepth::D18 => 18,
            EncoderDepth::D34 => 34,
            EncoderDepth::D50 => 50,
        }
    }

    pub fn blocks_per_stage(self) -> [usize; 4] {
        match self {
            EncoderDepth::D18 => [2, 2, 2, 2],
            EncoderDepth::D34 | EncoderDepth::D50 => [3, 4, 6, 3],
        }
    }

    pub fn block_kind(self) -> BlockKind {
        match self {
            EncoderDepth::D50 => BlockKind::Bottleneck,
            _ => BlockKind::Basic,
        }
    }
}

impl TryFrom<u32> for EncoderDepth {
    type Error = Error;

    fn try_from(layers: u32) -> Result<Self> {
        match layers {
            18 => Ok(EncoderDepth::D18),
            34 => Ok(EncoderDepth::D34),
            50 => Ok(EncoderDepth::D50),
            other => Err(Error::Config(format!(
                "unsupported encoder depth {other} (expected 18, 34 or 50)"
            ))),
        }
    }
}

impl From<EncoderDepth> for u32 {
    fn from(d: EncoderDepth) -> u32 {
        d.layers()
    }
}

impl std::fmt::Display for EncoderDepth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "mxresnet{}", self.layers())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_depth: EncoderDepth,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Scales every channel width; 1.0 is the full-size network.
    pub width_multiplier: f64,
    pub self_attention: bool,
    pub blur: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_depth: EncoderDepth::D50,
            in_channels: 3,
            out_channels: 31,
            width_multiplier: 1.0,
            self_attention: true,
            blur: true,
        }
    }
}

impl ModelConfig {
    pub fn new(encoder_depth: EncoderDepth, width_multiplier: f64) -> Self {
        Self { encoder_depth, width_multiplier, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be at least 1".into()));
        }
        let m = self.width_multiplier;
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Config(format!("width multiplier {m} must be positive")));
        }
        if m * 64.0 < 8.0 - 1e-9 {
            return Err(Error::Config(format!(
                "width multiplier {m} too small: 64 * multiplier must be at least 8"
            )));
        }
        Ok(())
    }
}

/// Shapes observed during one forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardTrace {
    pub taps: Vec<Vec<usize>>,
    pub bottleneck: Vec<usize>,
    pub decoder: Vec<Vec<usize>>,
    pub output: Vec<usize>,
}

pub struct MxrUnet<T: Float = f32> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub bottleneck: [ConvBnAct<T>; 2],
    pub decoder: [UnetDecoderBlock<T>; 4],
    pub attention: Option<SelfAttention<T>>,
    pub final_upsample: PixelShuffleUpsampler<T>,
    pub head_block: XResBlock<T>,
    pub head_conv: Conv2d<T>,
}

/// Builds the network with weights drawn from a seeded generator.
pub fn build_unet<T: Float>(cfg: &ModelConfig, seed: u64) -> Result<MxrUnet<T>> {
    build_unet_with_rng(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn build_unet_with_rng<T: Float>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<MxrUnet<T>> {
    cfg.validate()?;
    let encoder = build_mxresnet(cfg.encoder_depth, cfg.in_channels, cfg.width_multiplier, rng)?;
    let c = encoder.out_channels();
    let bottleneck = [
        ConvBnAct::new(ConvBnActSpec::new(c, 2 * c, 3, 1), rng)?,
        ConvBnAct::new(ConvBnActSpec::new(2 * c, c, 3, 1), rng)?,
    ];
    let taps = encoder.tap_channels();
    let d1 = UnetDecoderBlock::new(c, taps[3], cfg.blur, rng)?;
    let d2 = UnetDecoderBlock::new(d1.out_channels(), taps[2], cfg.blur, rng)?;
    let attention = if cfg.self_attention {
        Some(SelfAttention::new(d2.out_channels(), rng)?)
    } else {
        None
    };
    let d3 = UnetDecoderBlock::new(d2.out_channels(), taps[1], cfg.blur, rng)?;
    let d4 = UnetDecoderBlock::new(d3.out_channels(), taps[0], cfg.blur, rng)?;
    let up_in = d4.out_channels();
    let final_upsample = PixelShuffleUpsampler::new(up_in, (up_in / 2).max(1), 2, cfg.blur, rng)?;
    let head_width = final_upsample.out_channels() + cfg.in_channels;
    let head_block = XResBlock::new(
        XResnetBlockSpec { kind: BlockKind::Basic, in_channels: head_width, out_channels: head_width, stride: 1 },
        rng,
    )?;
    // Zero weights: the untrained model predicts the (normalized) mean cube.
    let head_conv = Conv2d::new(head_width, cfg.out_channels, 1, 1, 0, true, rng)?;
    head_conv.weight.set_data(vec![T::zero(); head_conv.weight.numel()])?;
    Ok(MxrUnet {
        config: cfg.clone(),
        encoder,
        bottleneck,
        decoder: [d1, d2, d3, d4],
        attention,
        final_upsample,
        head_block,
        head_conv,
    })
}

impl<T: Float> MxrUnet<T> {
    /// Rejects inputs the tap alignment cannot handle.
    pub fn check_input(&self, rgb: &Tensor<T>) -> Result<()> {
        let s = rgb.shape();
        let ok = s.len() == 4
            && s[1] == self.config.in_channels
            && s[2] > 0
            && s[3] > 0
            && s[2].is_multiple_of(SIZE_MULTIPLE)
            && s[3].is_multiple_of(SIZE_MULTIPLE);
        if ok {
            Ok(())
        } else {
            Err(Error::dimension(
                "mxr_unet",
                format!(
                    "input {s:?} must be [N, {}, H, W] with H and W multiples of {SIZE_MULTIPLE}; \
                     pad reflectively to the next multiple and crop the output back",
                    self.config.in_channels
                ),
            ))
        }
    }

    pub fn forward(&self, rgb: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(rgb, mode, None)
    }

    pub fn forward_traced(&self, rgb: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ForwardTrace)> {
        let mut trace = ForwardTrace::default();
        let out = self.run(rgb, mode, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(&self, rgb: &Tensor<T>, mode: Mode, mut trace: Option<&mut ForwardTrace>) -> Result<Tensor<T>> {
        self.check_input(rgb)?;
        let enc = self.encoder.forward(rgb, mode)?;
        let mut y = enc.out;
        for c in &self.bottleneck {
            y = c.forward(&y, mode)?;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.taps = enc.taps.iter().map(|x| x.shape().to_vec()).collect();
            t.bottleneck = y.shape().to_vec();
        }
        for (i, block) in self.decoder.iter().enumerate() {
            y = block.forward(&y, &enc.taps[3 - i], mode)?;
            if i == 1 {
                if let Some(att) = &self.attention {
                    y = att.forward(&y)?;
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.decoder.push(y.shape().to_vec());
            }
        }
        drop(enc.taps);
        let up = self.final_upsample.forward(&y)?;
        let y = concat_channels(&[&up, rgb])?;
        let y = self.head_block.forward(&y, mode)?;
        let out = self.head_conv.forward(&y)?;
        if let Some(t) = trace {
            t.output = out.shape().to_vec();
        }
        Ok(out)
    }
}

impl<T: Float> Module<T> for MxrUnet<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        for (i, c) in self.bottleneck.iter().enumerate() {
            c.visit(&join(prefix, &format!("bottleneck.{i}")), f);
        }
        for (i, d) in self.decoder.iter().enumerate() {
            d.visit(&join(prefix, &format!("decoder.{i}")), f);
        }
        if let Some(a) = &self.attention {
            a.visit(&join(prefix, "attention"), f);
        }
        self.final_upsample.visit(&join(prefix, "final_upsample"), f);
        self.head_block.visit(&join(prefix, "head_block"), f);
        self.head_conv.visit(&join(prefix, "head_conv"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_parsing() {
        assert_eq!(EncoderDepth::try_from(34).unwrap(), EncoderDepth::D34);
        assert!(matches!(EncoderDepth::try_from(101), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_tiny_multiplier() {
        let cfg = ModelConfig::new(EncoderDepth::D18, 1.0 / 16.0);
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::new(EncoderDepth::D18, 0.125).validate().is_ok());
    }

    #[test]
    fn rejects_non_multiple_of_32() {
        let m = build_unet::<f32>(&ModelConfig::new(EncoderDepth::D18, 0.125), 0).unwrap();
        let err = m.forward(&Tensor::zeros(&[1, 3, 70, 70]), Mode::Eval).unwrap_err();
        assert!(err.to_string().contains("pad"), "{err}");
    }

    #[test]
    fn single_conv_param_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = Conv2d::<f32>::new(3, 31, 1, 1, 0, true, &mut rng).unwrap();
        assert_eq!(c.count_params(), 124);
    }
}
