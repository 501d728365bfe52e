use rayon::prelude::*;

use crate::error::{dim_err, Result};
use crate::gemm::{gemm, Mat, MatMut};
use crate::ops::nchw;
use crate::{Float, Tensor};

/// Upper bound on elements in one im2col buffer.
const COLS_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output-position ranges whose im2col buffers fit the budget.
    fn chunks(&self) -> Vec<(usize, usize)> {
        let p = self.positions();
        if self.is_pointwise() {
            return vec![(0, p)];
        }
        let step = (COLS_BUDGET / self.k().max(1)).clamp(1, p.max(1));
        (0..p).step_by(step).map(|s| (s, (s + step).min(p))).collect()
    }
}

/// Lowers positions `[p0, p1)` of one image into a `[K, p1 - p0]` matrix.
fn im2col<T: Float>(x: &[T], g: &Geometry, p0: usize, p1: usize, cols: &mut [T]) {
    let len = p1 - p0;
    let kk = g.kh * g.kw;
    cols[..g.k() * len]
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let c = row / kk;
            let ki = (row % kk) / g.kw;
            let kj = row % g.kw;
            let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
            let (mut oh, mut ow) = (p0 / g.wo, p0 % g.wo);
            for d in dst.iter_mut() {
                let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                *d = if ih >= 0 && iw >= 0 && (ih as usize) < g.h && (iw as usize) < g.w {
                    plane[ih as usize * g.w + iw as usize]
                } else {
                    T::zero()
                };
                ow += 1;
                if ow == g.wo {
                    ow = 0;
                    oh += 1;
                }
            }
        });
}

/// Scatter-adds a `[K, p1 - p0]` column gradient back onto one image.
fn col2im<T: Float>(cols: &[T], g: &Geometry, p0: usize, p1: usize, gx: &mut [T]) {
    let len = p1 - p0;
    let kk = g.kh * g.kw;
    gx.par_chunks_mut(g.h * g.w)
        .enumerate()
        .for_each(|(c, plane)| {
            for r in 0..kk {
                let (ki, kj) = (r / g.kw, r % g.kw);
                let src = &cols[(c * kk + r) * len..(c * kk + r + 1) * len];
                let (mut oh, mut ow) = (p0 / g.wo, p0 % g.wo);
                for &v in src {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                    if ih >= 0 && iw >= 0 && (ih as usize) < g.h && (iw as usize) < g.w {
                        plane[ih as usize * g.w + iw as usize] += v;
                    }
                    ow += 1;
                    if ow == g.wo {
                        ow = 0;
                        oh += 1;
                    }
                }
            }
        });
}

/// 2-D cross-correlation with zero padding.
///
/// `x: [N, Ci, H, W]`, `w: [Co, Ci, kh, kw]`, `b: [Co]` → `[N, Co, H', W']`
/// where `H' = (H + 2*pad - kh) / stride + 1`.
pub fn conv2d<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, ci, h, wd) = nchw("conv2d", x.shape())?;
    let (co, wci, kh, kw) = match *w.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => return dim_err("conv2d", format!("weight must be [Co, Ci, kh, kw], got {:?}", w.shape())),
    };
    if wci != ci {
        return dim_err(
            "conv2d",
            format!("input {:?} has {ci} channels but weight {:?} expects {wci}", x.shape(), w.shape()),
        );
    }
    if stride == 0 {
        return dim_err("conv2d", "stride must be >= 1");
    }
    if h + 2 * pad < kh || wd + 2 * pad < kw {
        return dim_err(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {:?} (pad {pad})", x.shape()),
        );
    }
    if let Some(b) = b {
        if b.shape() != [co] {
            return dim_err("conv2d", format!("bias must be [{co}], got {:?}", b.shape()));
        }
    }
    let g = Geometry {
        ci,
        h,
        w: wd,
        kh,
        kw,
        stride,
        pad,
        ho: (h + 2 * pad - kh) / stride + 1,
        wo: (wd + 2 * pad - kw) / stride + 1,
    };
    let (k, p) = (g.k(), g.positions());
    let in_plane = ci * h * wd;
    let chunks = g.chunks();

    let mut out = vec![T::zero(); n * co * p];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * chunks[0].1] };
    let wmat = Mat::row_major(w.data(), co, k);
    for bi in 0..n {
        let xb = &x.data()[bi * in_plane..(bi + 1) * in_plane];
        let ob = &mut out[bi * co * p..(bi + 1) * co * p];
        for &(p0, p1) in &chunks {
            let len = p1 - p0;
            let colm = if g.is_pointwise() {
                Mat::row_major(xb, k, p)
            } else {
                im2col(xb, &g, p0, p1, &mut cols);
                Mat::row_major(&cols[..k * len], k, len)
            };
            gemm(T::one(), wmat, colm, T::zero(), MatMut::new(&mut ob[p0..], co, len, p, 1));
        }
        if let Some(b) = b {
            ob.par_chunks_mut(p)
                .zip(b.data().par_iter())
                .for_each(|(row, &bv)| row.iter_mut().for_each(|v| *v += bv));
        }
    }

    let mut inputs = vec![x, w];
    if let Some(b) = b {
        inputs.push(b);
    }
    Tensor::from_op("conv2d", out, vec![n, co, g.ho, g.wo], &inputs, move |gout, inputs, _| {
        let (x, w) = (&inputs[0], &inputs[1]);
        let need_x = x.tracks_grad();
        let need_w = w.tracks_grad();
        let mut gx = need_x.then(|| vec![T::zero(); n * in_plane]);
        let mut gw = need_w.then(|| vec![T::zero(); co * k]);
        let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { k * chunks[0].1 }];
        let mut gcols = vec![T::zero(); if need_x { k * chunks[0].1 } else { 0 }];
        let wmat = Mat::row_major(w.data(), co, k);
        for bi in 0..n {
            let xb = &x.data()[bi * in_plane..(bi + 1) * in_plane];
            let gb = &gout[bi * co * p..(bi + 1) * co * p];
            for &(p0, p1) in &chunks {
                let len = p1 - p0;
                let gmat = Mat::new(&gb[p0..], co, len, p, 1);
                if let Some(gw) = gw.as_mut() {
                    let colm = if g.is_pointwise() {
                        Mat::row_major(xb, k, p)
                    } else {
                        im2col(xb, &g, p0, p1, &mut cols);
                        Mat::row_major(&cols[..k * len], k, len)
                    };
                    gemm(T::one(), gmat, colm.t(), T::one(), MatMut::row_major(gw, co, k));
                }
                if let Some(gx) = gx.as_mut() {
                    let gxb = &mut gx[bi * in_plane..(bi + 1) * in_plane];
                    if g.is_pointwise() {
                        gemm(T::one(), wmat.t(), gmat, T::zero(), MatMut::row_major(gxb, k, p));
                    } else {
                        let gc = &mut gcols[..k * len];
                        gemm(T::one(), wmat.t(), gmat, T::zero(), MatMut::row_major(gc, k, len));
                        col2im(gc, &g, p0, p1, gxb);
                    }
                }
            }
        }
        let mut grads = vec![gx, gw];
        if inputs.len() == 3 {
            grads.push(inputs[2].tracks_grad().then(|| {
                gout.chunks_exact(p)
                    .enumerate()
                    .fold(vec![T::zero(); co], |mut acc, (row, vals)| {
                        acc[row % co] += vals.iter().copied().sum::<T>();
                        acc
                    })
            }));
        }
        grads
    })
}
