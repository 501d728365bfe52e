//! Seeded weight samplers.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::Result;
use crate::{Float, Tensor};

pub fn normal<T: Float>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Result<Tensor<T>> {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| T::cast(dist.sample(rng))).collect(), shape)
}

pub fn uniform<T: Float>(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Result<Tensor<T>> {
    let dist = Uniform::new(lo, hi).expect("lo < hi");
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| T::cast(dist.sample(rng))).collect(), shape)
}

/// He-normal for a conv weight `[Co, Ci, kh, kw]`: std = sqrt(2 / fan_in).
pub fn kaiming_normal<T: Float>(shape: &[usize], rng: &mut impl Rng) -> Result<Tensor<T>> {
    let fan_in: usize = shape[1..].iter().product();
    normal(shape, (2.0 / fan_in.max(1) as f64).sqrt(), rng)
}
