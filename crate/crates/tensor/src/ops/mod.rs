//! Differentiable primitives. Every op returns a new tensor and leaves its
//! inputs untouched.

mod conv;
mod elementwise;
mod matmul;
mod norm;
mod pool;
mod reduce;
mod shape;
mod softmax;

pub use conv::conv2d;
pub use matmul::matmul;
pub use norm::{batch_norm2d, BatchNormState, NormMode};
pub use pool::{avg_pool2d, max_pool2d, PadMode, Padding};
pub use shape::{concat_channels, pixel_shuffle, pixel_unshuffle};
pub use softmax::softmax;

use rayon::prelude::*;

use crate::error::{dim_err, Result};
use crate::Float;

const PAR_ELEMS: usize = 1 << 15;

pub(crate) fn par_map<T: Float>(src: &[T], f: impl Fn(T) -> T + Sync) -> Vec<T> {
    if src.len() >= PAR_ELEMS {
        src.par_iter().map(|&v| f(v)).collect()
    } else {
        src.iter().map(|&v| f(v)).collect()
    }
}

pub(crate) fn par_zip_map<T: Float>(a: &[T], b: &[T], f: impl Fn(T, T) -> T + Sync) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    if a.len() >= PAR_ELEMS {
        a.par_iter().zip(b.par_iter()).map(|(&x, &y)| f(x, y)).collect()
    } else {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    }
}

pub(crate) fn par_zip3_map<T: Float>(
    a: &[T],
    b: &[T],
    c: &[T],
    f: impl Fn(T, T, T) -> T + Sync,
) -> Vec<T> {
    if a.len() >= PAR_ELEMS {
        a.par_iter()
            .zip(b.par_iter())
            .zip(c.par_iter())
            .map(|((&x, &y), &z)| f(x, y, z))
            .collect()
    } else {
        a.iter()
            .zip(b)
            .zip(c)
            .map(|((&x, &y), &z)| f(x, y, z))
            .collect()
    }
}

/// Splits an `[N, C, H, W]` shape, rejecting anything else.
pub(crate) fn nchw(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => dim_err(op, format!("expected an [N, C, H, W] tensor, got shape {shape:?}")),
    }
}
