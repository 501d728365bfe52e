//! Layer vocabulary of the reconstruction network.

mod attention;
mod decoder;
mod layers;
mod upsample;
mod xresnet;

pub use attention::{SelfAttention, SelfAttentionParams};
pub use decoder::UnetDecoderBlock;
pub use layers::{Activation, BatchNorm2d, Conv2d, ConvBnAct, ConvBnActSpec};
pub use upsample::{blur, icnr_init, PixelShuffleUpsampler};
pub use xresnet::{build_mxresnet, BlockKind, Encoder, EncoderOutput, Stem, XResBlock, XResnetBlockSpec};

use mxr_tensor::ops::BatchNormState;
use mxr_tensor::{Float, Tensor};
use parking_lot::{Mutex, RwLock};

pub use mxr_tensor::ops::NormMode as Mode;

/// A named tensor owned by a layer. The current value is swapped out
/// wholesale on every optimizer step.
pub struct Param<T: Float> {
    value: RwLock<Tensor<T>>,
    trainable: bool,
    decay: bool,
}

impl<T: Float> Param<T> {
    pub fn new(init: Tensor<T>) -> Self {
        Self::with_flags(init, true, true)
    }

    /// Trainable but excluded from weight decay (norm scales/shifts, gates).
    pub fn no_decay(init: Tensor<T>) -> Self {
        Self::with_flags(init, true, false)
    }

    /// Never receives gradients.
    pub fn frozen(init: Tensor<T>) -> Self {
        Self::with_flags(init, false, false)
    }

    fn with_flags(init: Tensor<T>, trainable: bool, decay: bool) -> Self {
        Self {
            value: RwLock::new(init.requires_grad_(trainable)),
            trainable,
            decay,
        }
    }

    pub fn get(&self) -> Tensor<T> {
        self.value.read().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value.read().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value.read().numel()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn decays(&self) -> bool {
        self.decay
    }

    /// Replaces the values; the shape must not change.
    pub fn set_data(&self, data: Vec<T>) -> mxr_tensor::Result<()> {
        let mut slot = self.value.write();
        let fresh = Tensor::from_vec(data, slot.shape())?.requires_grad_(self.trainable);
        *slot = fresh;
        Ok(())
    }

    /// Installs an existing tensor (e.g. a leaf under gradient check) as the value.
    pub fn set(&self, t: Tensor<T>) {
        *self.value.write() = t;
    }

    pub fn zero_grad(&self) {
        self.value.read().zero_grad();
    }
}

/// Something a [`Module`] exposes to visitors.
pub enum Slot<'a, T: Float> {
    Param(&'a Param<T>),
    Norm(&'a Mutex<BatchNormState<T>>),
}

/// Layers expose every parameter and running-statistics buffer under a
/// stable dotted name, in a fixed order.
pub trait Module<T: Float> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>));

    fn parameters(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, slot| {
            if let Slot::Param(p) = slot {
                out.push((name.to_string(), p.get()));
            }
        });
        out
    }

    /// Total scalar count of trainable tensors.
    fn count_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, slot| {
            if let Slot::Param(p) = slot {
                if p.trainable() {
                    n += p.numel();
                }
            }
        });
        n
    }

    fn zero_grads(&self) {
        self.visit("", &mut |_, slot| {
            if let Slot::Param(p) = slot {
                p.zero_grad();
            }
        });
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `round(c * multiplier)`, at least 1.
pub fn scale_width(channels: usize, multiplier: f64) -> usize {
    ((channels as f64 * multiplier).round() as usize).max(1)
}
