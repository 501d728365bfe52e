use crate::error::{dim_err, Result};
use crate::ops::nchw;
use crate::{Float, Tensor};

impl<T: Float> Tensor<T> {
    /// Same values under a new shape; storage is shared.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return dim_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape()),
            );
        }
        Tensor::from_op_shared("reshape", self.shared_data(), shape.to_vec(), &[self], |g, _, _| {
            vec![Some(g.to_vec())]
        })
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self) -> Result<Self> {
        let r = self.rank();
        if r < 2 {
            return dim_err("transpose", format!("need rank >= 2, got {:?}", self.shape()));
        }
        let (m, n) = (self.shape()[r - 2], self.shape()[r - 1]);
        let mut shape = self.shape().to_vec();
        shape.swap(r - 2, r - 1);
        let data = transpose_blocks(self.data(), m, n);
        Tensor::from_op("transpose", data, shape, &[self], move |g, _, _| {
            vec![Some(transpose_blocks(g, n, m))]
        })
    }

    /// Channels `[start, start + len)` of an `[N, C, H, W]` tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let (n, c, h, w) = nchw("slice_channels", self.shape())?;
        if start + len > c {
            return dim_err(
                "slice_channels",
                format!("range {start}..{} exceeds {c} channels", start + len),
            );
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * len * plane);
        for b in 0..n {
            let base = (b * c + start) * plane;
            data.extend_from_slice(&self.data()[base..base + len * plane]);
        }
        Tensor::from_op("slice_channels", data, vec![n, len, h, w], &[self], move |g, _, _| {
            let mut gx = vec![T::zero(); n * c * plane];
            for b in 0..n {
                let dst = (b * c + start) * plane;
                gx[dst..dst + len * plane]
                    .copy_from_slice(&g[b * len * plane..(b + 1) * len * plane]);
            }
            vec![Some(gx)]
        })
    }
}

fn transpose_blocks<T: Float>(src: &[T], m: usize, n: usize) -> Vec<T> {
    let block = m * n;
    let mut out = vec![T::zero(); src.len()];
    if block == 0 {
        return out;
    }
    for (s, d) in src.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
        for i in 0..m {
            for j in 0..n {
                d[j * m + i] = s[i * n + j];
            }
        }
    }
    out
}

/// Concatenates `[N, Ci, H, W]` tensors along the channel axis, in order.
pub fn concat_channels<T: Float>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let Some(first) = xs.first() else {
        return dim_err("concat_channels", "no inputs");
    };
    let (n, _, h, w) = nchw("concat_channels", first.shape())?;
    let mut widths = Vec::with_capacity(xs.len());
    for (i, x) in xs.iter().enumerate() {
        let (ni, ci, hi, wi) = nchw("concat_channels", x.shape())?;
        if (ni, hi, wi) != (n, h, w) {
            return dim_err(
                "concat_channels",
                format!(
                    "input {i} has shape {:?}, incompatible with input 0 shape {:?}",
                    x.shape(),
                    first.shape()
                ),
            );
        }
        widths.push(ci);
    }
    let total: usize = widths.iter().sum();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total * plane);
    for b in 0..n {
        for (x, &ci) in xs.iter().zip(&widths) {
            data.extend_from_slice(&x.data()[b * ci * plane..(b + 1) * ci * plane]);
        }
    }
    Tensor::from_op("concat_channels", data, vec![n, total, h, w], xs, move |g, inputs, _| {
        let mut offset = 0;
        let mut grads = Vec::with_capacity(inputs.len());
        for (x, &ci) in inputs.iter().zip(&widths) {
            let gi = x.tracks_grad().then(|| {
                let mut gx = Vec::with_capacity(n * ci * plane);
                for b in 0..n {
                    let src = (b * total + offset) * plane;
                    gx.extend_from_slice(&g[src..src + ci * plane]);
                }
                gx
            });
            offset += ci;
            grads.push(gi);
        }
        grads
    })
}

/// `[N, C*r*r, H, W] -> [N, C, H*r, W*r]` with
/// `out[n, c, h*r + i, w*r + j] = in[n, c*r*r + i*r + j, h, w]`.
pub fn pixel_shuffle<T: Float>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, cr, h, w) = nchw("pixel_shuffle", x.shape())?;
    if r == 0 || cr % (r * r) != 0 {
        return dim_err(
            "pixel_shuffle",
            format!("{cr} channels not divisible by r^2 = {}", r * r),
        );
    }
    let c = cr / (r * r);
    let data = shuffle(x.data(), n, c, h, w, r, true);
    Tensor::from_op("pixel_shuffle", data, vec![n, c, h * r, w * r], &[x], move |g, _, _| {
        vec![Some(shuffle(g, n, c, h, w, r, false))]
    })
}

/// Inverse of [`pixel_shuffle`]: `[N, C, H*r, W*r] -> [N, C*r*r, H, W]`.
pub fn pixel_unshuffle<T: Float>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c, hr, wr) = nchw("pixel_unshuffle", x.shape())?;
    if r == 0 || hr % r != 0 || wr % r != 0 {
        return dim_err(
            "pixel_unshuffle",
            format!("spatial size {hr}x{wr} not divisible by {r}"),
        );
    }
    let (h, w) = (hr / r, wr / r);
    let data = shuffle(x.data(), n, c, h, w, r, false);
    Tensor::from_op("pixel_unshuffle", data, vec![n, c * r * r, h, w], &[x], move |g, _, _| {
        vec![Some(shuffle(g, n, c, h, w, r, true))]
    })
}

/// Moves values between the packed `[N, C*r*r, H, W]` layout and the
/// expanded `[N, C, H*r, W*r]` layout (`forward` = packed to expanded).
fn shuffle<T: Float>(src: &[T], n: usize, c: usize, h: usize, w: usize, r: usize, forward: bool) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    let (hr, wr) = (h * r, w * r);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let packed_plane = ((b * c + ch) * r * r + i * r + j) * h * w;
                    let expanded_plane = (b * c + ch) * hr * wr;
                    for y in 0..h {
                        for x in 0..w {
                            let p = packed_plane + y * w + x;
                            let e = expanded_plane + (y * r + i) * wr + x * r + j;
                            if forward {
                                out[e] = src[p];
                            } else {
                                out[p] = src[e];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_four_channels_to_two_by_two() {
        let x = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 4, 1, 1]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn shuffle_rejects_indivisible_channels() {
        let x = Tensor::<f32>::zeros(&[1, 6, 2, 2]);
        assert!(pixel_shuffle(&x, 2).is_err());
    }

    #[test]
    fn concat_shapes_and_slices() {
        let a = Tensor::<f32>::from_vec((0..32).map(|v| v as f32).collect(), &[1, 2, 4, 4]).unwrap();
        let b = Tensor::<f32>::ones(&[1, 3, 4, 4]);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[1, 5, 4, 4]);
        assert_eq!(c.slice_channels(0, 2).unwrap().data(), a.data());
        let single = concat_channels(&[&a]).unwrap();
        assert_eq!(single.data(), a.data());
    }

    #[test]
    fn concat_names_offending_input() {
        let a = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let b = Tensor::<f32>::zeros(&[1, 2, 4, 5]);
        let err = concat_channels(&[&a, &a, &b]).unwrap_err().to_string();
        assert!(err.contains("input 2"), "{err}");
    }
}
