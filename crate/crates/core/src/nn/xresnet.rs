//! Resnet-D ("xresnet") encoder with Mish activations.

use mxr_tensor::ops::{avg_pool2d, max_pool2d, PadMode, Padding};
use mxr_tensor::{Float, Result, Tensor};
use rand::Rng;

use super::{join, scale_width, Activation, ConvBnAct, ConvBnActSpec, Mode, Module, Slot};
use crate::model::EncoderDepth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// 3x3 -> 3x3
    Basic,
    /// 1x1 -> 3x3 (strided) -> 1x1, output 4x the hidden width
    Bottleneck,
}

impl BlockKind {
    pub fn expansion(self) -> usize {
        match self {
            BlockKind::Basic => 1,
            BlockKind::Bottleneck => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XResnetBlockSpec {
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl XResnetBlockSpec {
    /// Shortcut is avg-pool (when strided) + 1x1 conv + BN instead of identity.
    pub fn has_projection(&self) -> bool {
        self.stride != 1 || self.in_channels != self.out_channels
    }
}

pub struct XResBlock<T: Float> {
    pub spec: XResnetBlockSpec,
    pub convs: Vec<ConvBnAct<T>>,
    pub shortcut: Option<ConvBnAct<T>>,
}

impl<T: Float> XResBlock<T> {
    pub fn new(spec: XResnetBlockSpec, rng: &mut impl Rng) -> Result<Self> {
        let (ci, co, s) = (spec.in_channels, spec.out_channels, spec.stride);
        let last = |c_in, k| ConvBnActSpec::new(c_in, co, k, 1).activation(Activation::None);
        let convs = match spec.kind {
            BlockKind::Basic => vec![
                ConvBnAct::new(ConvBnActSpec::new(ci, co, 3, s), rng)?,
                ConvBnAct::zero_bn(last(co, 3), rng)?,
            ],
            BlockKind::Bottleneck => {
                let hidden = (co / 4).max(1);
                vec![
                    ConvBnAct::new(ConvBnActSpec::new(ci, hidden, 1, 1), rng)?,
                    ConvBnAct::new(ConvBnActSpec::new(hidden, hidden, 3, s), rng)?,
                    ConvBnAct::zero_bn(last(hidden, 1), rng)?,
                ]
            }
        };
        let shortcut = if spec.has_projection() {
            let sc = ConvBnActSpec::new(ci, co, 1, 1).activation(Activation::None);
            Some(ConvBnAct::new(sc, rng)?)
        } else {
            None
        };
        Ok(Self { spec, convs, shortcut })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut main = x.clone();
        for c in &self.convs {
            main = c.forward(&main, mode)?;
        }
        let identity = match &self.shortcut {
            None => x.clone(),
            Some(proj) => {
                let pooled = if self.spec.stride != 1 {
                    avg_pool2d(x, self.spec.stride, self.spec.stride, PadMode::Zero, Padding::default())?
                } else {
                    x.clone()
                };
                proj.forward(&pooled, mode)?
            }
        };
        main.add(&identity)?.mish()
    }
}

impl<T: Float> Module<T> for XResBlock<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&join(prefix, &format!("convs.{i}")), f);
        }
        if let Some(sc) = &self.shortcut {
            sc.visit(&join(prefix, "shortcut"), f);
        }
    }
}

/// Three 3x3 conv-bn-mish layers (the first with stride 2) and a 3x3/2 max-pool.
pub struct Stem<T: Float> {
    pub convs: Vec<ConvBnAct<T>>,
}

impl<T: Float> Stem<T> {
    pub fn new(in_channels: usize, widths: [usize; 3], rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            convs: vec![
                ConvBnAct::new(ConvBnActSpec::new(in_channels, widths[0], 3, 2), rng)?,
                ConvBnAct::new(ConvBnActSpec::new(widths[0], widths[1], 3, 1), rng)?,
                ConvBnAct::new(ConvBnActSpec::new(widths[1], widths[2], 3, 1), rng)?,
            ],
        })
    }

    pub fn out_channels(&self) -> usize {
        self.convs[2].spec.out_channels
    }

    /// Returns the half-resolution activation before the pool and the
    /// quarter-resolution pooled output.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tensor<T>)> {
        let shape = x.shape();
        if shape.len() != 4 || shape[2] < 8 || shape[3] < 8 {
            return Err(mxr_tensor::TensorError::Dimension {
                op: "xresnet_stem",
                detail: format!("input {shape:?} is smaller than 8x8"),
            });
        }
        let mut y = x.clone();
        for c in &self.convs {
            y = c.forward(&y, mode)?;
        }
        let pooled = max_pool2d(&y, 3, 2, 1)?;
        Ok((y, pooled))
    }
}

impl<T: Float> Module<T> for Stem<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&join(prefix, &i.to_string()), f);
        }
    }
}

/// Activations the U-Net taps: at 1/2, 1/4, 1/8, 1/16 of the input, plus
/// the final 1/32 feature map.
pub struct EncoderOutput<T: Float> {
    pub taps: [Tensor<T>; 4],
    pub out: Tensor<T>,
}

pub struct Encoder<T: Float> {
    pub depth: EncoderDepth,
    pub stem: Stem<T>,
    pub stages: Vec<Vec<XResBlock<T>>>,
}

impl<T: Float> Encoder<T> {
    pub fn stage_out_channels(&self) -> [usize; 4] {
        std::array::from_fn(|i| self.stages[i].last().expect("non-empty stage").spec.out_channels)
    }

    pub fn out_channels(&self) -> usize {
        self.stage_out_channels()[3]
    }

    /// Channel widths of the four taps, shallowest first.
    pub fn tap_channels(&self) -> [usize; 4] {
        let s = self.stage_out_channels();
        [self.stem.out_channels(), s[0], s[1], s[2]]
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<EncoderOutput<T>> {
        let (half, mut y) = self.stem.forward(x, mode)?;
        let mut stage_outs = Vec::with_capacity(4);
        for stage in &self.stages {
            for block in stage {
                y = block.forward(&y, mode)?;
            }
            stage_outs.push(y.clone());
        }
        let out = stage_outs.pop().expect("four stages");
        let [s1, s2, s3]: [Tensor<T>; 3] = stage_outs.try_into().map_err(|_| {
            mxr_tensor::TensorError::Contract("encoder must have four stages".into())
        })?;
        Ok(EncoderOutput { taps: [half, s1, s2, s3], out })
    }
}

impl<T: Float> Module<T> for Encoder<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.visit(&join(prefix, &format!("stages.{s}.{b}")), f);
            }
        }
    }
}

/// Mish-activated xresnet encoder for depth 18, 34 or 50.
pub fn build_mxresnet<T: Float>(
    depth: EncoderDepth,
    in_channels: usize,
    width_multiplier: f64,
    rng: &mut impl Rng,
) -> Result<Encoder<T>> {
    let w = |c| scale_width(c, width_multiplier);
    let stem = Stem::new(in_channels, [w(32), w(32), w(64)], rng)?;
    let kind = depth.block_kind();
    let mut c_in = stem.out_channels();
    let mut stages = Vec::with_capacity(4);
    for (i, (&blocks, base)) in depth.blocks_per_stage().iter().zip([64, 128, 256, 512]).enumerate() {
        let c_out = w(base) * kind.expansion();
        let mut stage = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let stride = if i > 0 && b == 0 { 2 } else { 1 };
            let spec = XResnetBlockSpec { kind, in_channels: c_in, out_channels: c_out, stride };
            stage.push(XResBlock::new(spec, rng)?);
            c_in = c_out;
        }
        stages.push(stage);
    }
    Ok(Encoder { depth, stem, stages })
}
