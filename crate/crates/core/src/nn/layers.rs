use mxr_tensor::ops::{batch_norm2d, conv2d, BatchNormState};
use mxr_tensor::{init, Float, Result, Tensor};
use parking_lot::Mutex;
use rand::Rng;

use super::{join, Mode, Module, Param, Slot};

pub struct Conv2d<T: Float> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Float> Conv2d<T> {
    /// He-normal weights, zero bias.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = init::kaiming_normal(&[out_channels, in_channels, kernel, kernel], rng)?;
        Ok(Self::from_weights(w, bias.then(|| Tensor::zeros(&[out_channels])), stride, padding))
    }

    pub fn from_weights(weight: Tensor<T>, bias: Option<Tensor<T>>, stride: usize, padding: usize) -> Self {
        Self {
            weight: Param::new(weight),
            bias: bias.map(Param::new),
            stride,
            padding,
        }
    }

    /// Same layer with non-trainable weights.
    pub fn frozen(weight: Tensor<T>, bias: Option<Tensor<T>>, stride: usize, padding: usize) -> Self {
        Self {
            weight: Param::frozen(weight),
            bias: bias.map(Param::frozen),
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.bias.as_ref().map(Param::get);
        conv2d(x, &self.weight.get(), b.as_ref(), self.stride, self.padding)
    }
}

impl<T: Float> Module<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&join(prefix, "weight"), Slot::Param(&self.weight));
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), Slot::Param(b));
        }
    }
}

pub struct BatchNorm2d<T: Float> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub state: Mutex<BatchNormState<T>>,
}

impl<T: Float> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self::with_gamma(channels, T::one())
    }

    /// Scale initialised to zero, so a residual branch starts closed.
    pub fn zero_gamma(channels: usize) -> Self {
        Self::with_gamma(channels, T::zero())
    }

    fn with_gamma(channels: usize, g: T) -> Self {
        Self {
            gamma: Param::no_decay(Tensor::full(&[channels], g)),
            beta: Param::no_decay(Tensor::zeros(&[channels])),
            state: Mutex::new(BatchNormState::new(channels)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut state = self.state.lock();
        batch_norm2d(x, &self.gamma.get(), &self.beta.get(), &mut state, mode)
    }
}

impl<T: Float> Module<T> for BatchNorm2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&join(prefix, "gamma"), Slot::Param(&self.gamma));
        f(&join(prefix, "beta"), Slot::Param(&self.beta));
        f(prefix, Slot::Norm(&self.state));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Mish,
    Relu,
    None,
}

impl Activation {
    pub fn apply<T: Float>(self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Mish => x.mish(),
            Activation::Relu => x.relu(),
            Activation::None => Ok(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvBnActSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub use_bn: bool,
    pub activation: Activation,
}

impl ConvBnActSpec {
    /// Conv + BN + Mish with `kernel / 2` padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            use_bn: true,
            activation: Activation::Mish,
        }
    }

    pub fn activation(mut self, act: Activation) -> Self {
        self.activation = act;
        self
    }
}

pub struct ConvBnAct<T: Float> {
    pub spec: ConvBnActSpec,
    pub conv: Conv2d<T>,
    pub bn: Option<BatchNorm2d<T>>,
}

impl<T: Float> ConvBnAct<T> {
    pub fn new(spec: ConvBnActSpec, rng: &mut impl Rng) -> Result<Self> {
        Self::build(spec, false, rng)
    }

    /// Variant whose BN scale starts at zero (last layer of a residual branch).
    pub fn zero_bn(spec: ConvBnActSpec, rng: &mut impl Rng) -> Result<Self> {
        Self::build(spec, true, rng)
    }

    fn build(spec: ConvBnActSpec, zero: bool, rng: &mut impl Rng) -> Result<Self> {
        let conv = Conv2d::new(
            spec.in_channels,
            spec.out_channels,
            spec.kernel,
            spec.stride,
            spec.padding,
            !spec.use_bn,
            rng,
        )?;
        let bn = spec.use_bn.then(|| {
            if zero {
                BatchNorm2d::zero_gamma(spec.out_channels)
            } else {
                BatchNorm2d::new(spec.out_channels)
            }
        });
        Ok(Self { spec, conv, bn })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut y = self.conv.forward(x)?;
        if let Some(bn) = &self.bn {
            y = bn.forward(&y, mode)?;
        }
        self.spec.activation.apply(y)
    }
}

impl<T: Float> Module<T> for ConvBnAct<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        if let Some(bn) = &self.bn {
            bn.visit(&join(prefix, "bn"), f);
        }
    }
}
