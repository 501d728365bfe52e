//! Perceptual loss: feature reconstruction, style (Gram) and pixel terms
//! over a frozen VGG16-shaped loss network.

use mxr_tensor::ops::{matmul, max_pool2d};
use mxr_tensor::{init, Float, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{join, Conv2d, Module, Slot};

/// Conv widths of the five VGG16 blocks; a max-pool follows each block.
pub const VGG16_BLOCKS: [&[usize]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];

/// Number of leading blocks whose output is tapped (before pools 2, 3, 4).
const TAPPED_BLOCKS: std::ops::Range<usize> = 1..4;

/// Frozen feature extractor. The input layer takes the cube's bands; all
/// other layers follow the 3-channel VGG16 layout.
pub struct LossNetwork<T: Float = f32> {
    in_channels: usize,
    blocks: Vec<Vec<Conv2d<T>>>,
}

/// Widens a `[64, 3, k, k]` RGB filter bank to `in_channels` inputs by
/// copying source channel `c mod 3` into destination channel `c`.
pub fn adapt_input_layer<T: Float>(w3: &Tensor<T>, in_channels: usize) -> Result<Tensor<T>> {
    let s = w3.shape();
    if s.len() != 4 || s[1] != 3 || in_channels == 0 {
        return Err(Error::dimension(
            "adapt_input_layer",
            format!("expected [O, 3, k, k] source and positive target channels, got {s:?} -> {in_channels}"),
        ));
    }
    let (o, kk) = (s[0], s[2] * s[3]);
    let src = w3.data();
    let mut data = Vec::with_capacity(o * in_channels * kk);
    for f in 0..o {
        for c in 0..in_channels {
            let at = (f * 3 + c % 3) * kk;
            data.extend_from_slice(&src[at..at + kk]);
        }
    }
    Ok(Tensor::from_vec(data, &[o, in_channels, s[2], s[3]])?)
}

impl<T: Float> LossNetwork<T> {
    /// Builds frozen network from `(weight, bias)` pairs for the 13 convs of
    /// a 3-channel VGG16, adapting the first layer to `in_channels`.
    pub fn from_rgb_weights(layers: Vec<(Tensor<T>, Tensor<T>)>, in_channels: usize) -> Result<Self> {
        let widths: Vec<usize> = VGG16_BLOCKS.iter().flat_map(|b| b.iter().copied()).collect();
        if layers.len() != widths.len() {
            return Err(Error::Integrity(format!(
                "loss network needs {} conv layers, got {}",
                widths.len(),
                layers.len()
            )));
        }
        let mut c_in = 3;
        let mut it = layers.into_iter();
        let mut blocks = Vec::with_capacity(VGG16_BLOCKS.len());
        for (b, block) in VGG16_BLOCKS.iter().enumerate() {
            let mut convs = Vec::with_capacity(block.len());
            for (i, &c_out) in block.iter().enumerate() {
                let (w, bias) = it.next().expect("length checked");
                if w.shape() != [c_out, c_in, 3, 3] || bias.shape() != [c_out] {
                    return Err(Error::Integrity(format!(
                        "loss network conv {b}.{i}: got weight {:?} / bias {:?}, expected [{c_out}, {c_in}, 3, 3] / [{c_out}]",
                        w.shape(),
                        bias.shape()
                    )));
                }
                let w = if b == 0 && i == 0 { adapt_input_layer(&w, in_channels)? } else { w };
                convs.push(Conv2d::frozen(w, Some(bias), 1, 1));
                c_in = c_out;
            }
            blocks.push(convs);
        }
        Ok(Self { in_channels, blocks })
    }

    /// He-initialised frozen weights from a fixed seed.
    pub fn seeded(in_channels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut c_in = 3;
        for &c_out in VGG16_BLOCKS.iter().flat_map(|b| b.iter()) {
            let w = init::kaiming_normal(&[c_out, c_in, 3, 3], &mut rng)?;
            layers.push((w, Tensor::zeros(&[c_out])));
            c_in = c_out;
        }
        Self::from_rgb_weights(layers, in_channels)
    }

    /// Builds an empty-shaped network whose weights are filled in by a
    /// checkpoint load.
    pub fn zeroed(in_channels: usize) -> Result<Self> {
        let mut layers = Vec::new();
        let mut c_in = 3;
        for &c_out in VGG16_BLOCKS.iter().flat_map(|b| b.iter()) {
            layers.push((Tensor::zeros(&[c_out, c_in, 3, 3]), Tensor::zeros(&[c_out])));
            c_in = c_out;
        }
        Self::from_rgb_weights(layers, in_channels)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Channel widths of the three taps.
    pub fn tap_channels(&self) -> [usize; 3] {
        std::array::from_fn(|j| *VGG16_BLOCKS[TAPPED_BLOCKS.start + j].last().expect("non-empty block"))
    }

    /// Activations before max-pools 2, 3 and 4 (at 1/2, 1/4, 1/8 of the input).
    /// Layers past the last tap are never evaluated.
    pub fn extract_features(&self, x: &Tensor<T>) -> Result<[Tensor<T>; 3]> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels || s[2] < 8 || s[3] < 8 {
            return Err(Error::dimension(
                "extract_features",
                format!("input {s:?} must be [N, {}, H, W] with H, W >= 8", self.in_channels),
            ));
        }
        let mut y = x.clone();
        let mut taps = Vec::with_capacity(3);
        for (b, block) in self.blocks.iter().enumerate().take(TAPPED_BLOCKS.end) {
            if b > 0 {
                y = max_pool2d(&y, 2, 2, 0)?;
            }
            for conv in block {
                y = conv.forward(&y)?.relu()?;
            }
            if TAPPED_BLOCKS.contains(&b) {
                taps.push(y.clone());
            }
        }
        taps.try_into().map_err(|_| Error::Contract("three taps".into()))
    }
}

impl<T: Float> Module<T> for LossNetwork<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        for (b, block) in self.blocks.iter().enumerate() {
            for (i, conv) in block.iter().enumerate() {
                conv.visit(&join(prefix, &format!("conv{}_{}", b + 1, i + 1)), f);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// Feature reconstruction weight per tap.
    pub alpha: [f64; 3],
    /// Style weight per tap.
    pub beta: [f64; 3],
    /// Pixel loss weight.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: [1.0; 3], beta: [5e3; 3], gamma: 1.0 }
    }
}

impl LossWeights {
    pub fn pixel_only() -> Self {
        Self { alpha: [0.0; 3], beta: [0.0; 3], gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.alpha.iter().chain(&self.beta).chain(std::iter::once(&self.gamma));
        let mut any_positive = false;
        for &w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("loss weight {w} must be finite and non-negative")));
            }
            any_positive |= w > 0.0;
        }
        if !any_positive {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }

    fn needs_features(&self) -> bool {
        self.alpha.iter().chain(&self.beta).any(|&w| w > 0.0)
    }
}

fn same_shape<T: Float>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::dimension(op, format!("shapes differ: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

/// Mean absolute difference between two feature maps.
pub fn feature_loss<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("feature_loss", pred, target)?;
    Ok(pred.sub(target)?.abs()?.mean()?)
}

/// `psi psi^T / (C H W)` per batch element: `[N, C, H, W] -> [N, C, C]`
/// (or `[C, H, W] -> [C, C]`).
pub fn gram<T: Float>(phi: &Tensor<T>) -> Result<Tensor<T>> {
    let s = phi.shape().to_vec();
    let (lead, chw) = match s.len() {
        3 => (vec![], &s[..]),
        4 => (vec![s[0]], &s[1..]),
        _ => return Err(Error::dimension("gram", format!("expected [N,] C, H, W; got {s:?}"))),
    };
    let (c, hw) = (chw[0], chw[1] * chw[2]);
    let mut flat = lead.clone();
    flat.extend([c, hw]);
    let psi = phi.reshape(&flat)?;
    let g = matmul(&psi, &psi.transpose_last2()?)?;
    Ok(g.mul_scalar(T::cast(1.0 / (c * hw) as f64))?)
}

/// Mean absolute difference between Gram matrices, averaged over the batch.
pub fn style_loss<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("style_loss", pred, target)?;
    Ok(gram(pred)?.sub(&gram(target)?)?.abs()?.mean()?)
}

/// Mean squared difference, i.e. `||pred - target||^2 / (C H W)` averaged over the batch.
pub fn pixel_loss<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("pixel_loss", pred, target)?;
    Ok(pred.sub(target)?.square()?.mean()?)
}

/// The weighted total plus each unweighted term (terms with zero weight are
/// not evaluated and reported as 0).
pub struct LossTerms<T: Float> {
    pub total: Tensor<T>,
    pub feature: [f64; 3],
    pub style: [f64; 3],
    pub pixel: f64,
}

impl<T: Float> LossTerms<T> {
    pub fn summary(&self) -> String {
        format!(
            "total={:.6e} feat=[{:.4e},{:.4e},{:.4e}] style=[{:.4e},{:.4e},{:.4e}] pixel={:.6e}",
            self.total.data()[0].as_f64(),
            self.feature[0],
            self.feature[1],
            self.feature[2],
            self.style[0],
            self.style[1],
            self.style[2],
            self.pixel
        )
    }
}

pub fn total_loss<T: Float>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    net: &LossNetwork<T>,
    w: &LossWeights,
) -> Result<LossTerms<T>> {
    same_shape("total_loss", pred, target)?;
    let mut feature = [0.0; 3];
    let mut style = [0.0; 3];
    let mut pixel = 0.0;
    let mut parts: Vec<Tensor<T>> = Vec::new();
    let mut push = |term: Tensor<T>, weight: f64, record: &mut f64| -> Result<()> {
        *record = term.data()[0].as_f64();
        parts.push(if weight == 1.0 { term } else { term.mul_scalar(T::cast(weight))? });
        Ok(())
    };

    if w.needs_features() {
        let fp = net.extract_features(pred)?;
        let ft = {
            let _g = mxr_tensor::no_grad();
            net.extract_features(&target.detach())?
        };
        for j in 0..3 {
            if w.alpha[j] > 0.0 {
                push(feature_loss(&fp[j], &ft[j])?, w.alpha[j], &mut feature[j])?;
            }
            if w.beta[j] > 0.0 {
                push(style_loss(&fp[j], &ft[j])?, w.beta[j], &mut style[j])?;
            }
        }
    }
    if w.gamma > 0.0 {
        push(pixel_loss(pred, target)?, w.gamma, &mut pixel)?;
    }
    let mut it = parts.into_iter();
    let mut total = it
        .next()
        .ok_or_else(|| Error::Config("at least one loss weight must be positive".into()))?;
    for p in it {
        total = total.add(&p)?;
    }
    Ok(LossTerms { total, feature, style, pixel })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adapted_channels_repeat_mod_three() {
        let w3 = Tensor::<f64>::from_vec((0..64 * 27).map(|v| v as f64).collect(), &[64, 3, 3, 3]).unwrap();
        let w = adapt_input_layer(&w3, 31).unwrap();
        assert_eq!(w.shape(), &[64, 31, 3, 3]);
        let d = w.data();
        for f in [0, 17, 63] {
            for c in 0..31 {
                let dst = &d[(f * 31 + c) * 9..(f * 31 + c + 1) * 9];
                let src = &w3.data()[(f * 3 + c % 3) * 9..(f * 3 + c % 3 + 1) * 9];
                assert_eq!(dst, src);
            }
        }
        assert!(adapt_input_layer(&Tensor::<f64>::zeros(&[64, 4, 3, 3]), 31).is_err());
    }

    #[test]
    fn gram_hand_case() {
        let phi = Tensor::<f64>::from_vec(vec![1.0, 2.0], &[2, 1, 1]).unwrap();
        assert_eq!(gram(&phi).unwrap().data(), &[0.5, 1.0, 1.0, 2.0]);
        let zero = Tensor::<f64>::zeros(&[1, 2, 1, 1]);
        let phi4 = phi.reshape(&[1, 2, 1, 1]).unwrap();
        assert_eq!(style_loss(&phi4, &zero).unwrap().item().unwrap(), 1.125);
    }

    #[test]
    fn hand_cases() {
        let p = Tensor::<f64>::from_vec(vec![1.0, -2.0], &[1, 2, 1, 1]).unwrap();
        let z = Tensor::<f64>::zeros(&[1, 2, 1, 1]);
        assert_eq!(feature_loss(&p, &z).unwrap().item().unwrap(), 1.5);
        let d = Tensor::<f64>::from_vec(vec![3.0, 4.0], &[1, 2, 1, 1]).unwrap();
        assert_eq!(pixel_loss(&d, &z).unwrap().item().unwrap(), 12.5);
        assert!(pixel_loss(&d, &Tensor::zeros(&[1, 1, 2, 1])).is_err());
    }

    #[test]
    fn tap_shapes() {
        let net = LossNetwork::<f32>::seeded(31, 0).unwrap();
        let taps = net.extract_features(&Tensor::ones(&[1, 31, 16, 24])).unwrap();
        assert_eq!(taps[0].shape(), &[1, 128, 8, 12]);
        assert_eq!(taps[1].shape(), &[1, 256, 4, 6]);
        assert_eq!(taps[2].shape(), &[1, 512, 2, 3]);
        assert_eq!(net.tap_channels(), [128, 256, 512]);
        assert!(net.extract_features(&Tensor::ones(&[1, 31, 4, 8])).is_err());
        assert_eq!(net.count_params(), 0);
    }

    #[test]
    fn zero_weights_rejected() {
        let w = LossWeights { alpha: [0.0; 3], beta: [0.0; 3], gamma: 0.0 };
        assert!(w.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
    }
}
