use rayon::prelude::*;

use crate::error::{dim_err, Result};
use crate::ops::nchw;
use crate::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Out-of-range taps read zero (and still count towards the mean).
    Zero,
    /// Out-of-range taps read the nearest edge value.
    Replicate,
}

/// Per-side padding in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Self { top: p, left: p, bottom: p, right: p }
    }
}

struct Window {
    h: usize,
    w: usize,
    pad: Padding,
    ho: usize,
    wo: usize,
}

impl Window {
    fn new(op: &'static str, h: usize, w: usize, kernel: usize, stride: usize, pad: Padding) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return dim_err(op, "kernel and stride must be >= 1");
        }
        let (ph, pw) = (h + pad.top + pad.bottom, w + pad.left + pad.right);
        if ph < kernel || pw < kernel {
            return dim_err(op, format!("window {kernel}x{kernel} larger than padded input {ph}x{pw}"));
        }
        Ok(Self {
            h,
            w,
            pad,
            ho: (ph - kernel) / stride + 1,
            wo: (pw - kernel) / stride + 1,
        })
    }

    /// Source pixel for padded coordinate `(y, x)`, or `None` if it lies in
    /// the zero region.
    fn source(&self, y: usize, x: usize, mode: PadMode) -> Option<usize> {
        let iy = y as isize - self.pad.top as isize;
        let ix = x as isize - self.pad.left as isize;
        let inside = iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w;
        match mode {
            _ if inside => Some(iy as usize * self.w + ix as usize),
            PadMode::Zero => None,
            PadMode::Replicate => {
                let cy = iy.clamp(0, self.h as isize - 1) as usize;
                let cx = ix.clamp(0, self.w as isize - 1) as usize;
                Some(cy * self.w + cx)
            }
        }
    }
}

/// Mean over each `kernel x kernel` window of the padded input.
pub fn avg_pool2d<T: Float>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    mode: PadMode,
    pad: Padding,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = nchw("avg_pool2d", x.shape())?;
    let win = Window::new("avg_pool2d", h, w, kernel, stride, pad)?;
    let (ho, wo) = (win.ho, win.wo);
    let scale = T::cast(1.0 / (kernel * kernel) as f64);
    let mut out = vec![T::zero(); n * c * ho * wo];
    out.par_chunks_mut(ho * wo)
        .zip(x.data().par_chunks(h * w))
        .for_each(|(dst, src)| {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = T::zero();
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            if let Some(s) = win.source(oy * stride + ky, ox * stride + kx, mode) {
                                acc += src[s];
                            }
                        }
                    }
                    dst[oy * wo + ox] = acc * scale;
                }
            }
        });
    Tensor::from_op("avg_pool2d", out, vec![n, c, ho, wo], &[x], move |g, _, _| {
        let mut gx = vec![T::zero(); n * c * h * w];
        gx.par_chunks_mut(h * w)
            .zip(g.par_chunks(ho * wo))
            .for_each(|(dst, src)| {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let v = src[oy * wo + ox] * scale;
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                if let Some(s) = win.source(oy * stride + ky, ox * stride + kx, mode) {
                                    dst[s] += v;
                                }
                            }
                        }
                    }
                }
            });
        vec![Some(gx)]
    })
}

/// Max over each window; padded taps never win.
pub fn max_pool2d<T: Float>(x: &Tensor<T>, kernel: usize, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = nchw("max_pool2d", x.shape())?;
    if pad * 2 > kernel {
        return dim_err("max_pool2d", format!("padding {pad} exceeds half the kernel {kernel}"));
    }
    let win = Window::new("max_pool2d", h, w, kernel, stride, Padding::uniform(pad))?;
    let (ho, wo) = (win.ho, win.wo);
    let mut out = vec![T::zero(); n * c * ho * wo];
    let mut arg = vec![0u32; n * c * ho * wo];
    out.par_chunks_mut(ho * wo)
        .zip(arg.par_chunks_mut(ho * wo))
        .zip(x.data().par_chunks(h * w))
        .for_each(|((dst, idx), src)| {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut best_i = 0;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            if let Some(s) = win.source(oy * stride + ky, ox * stride + kx, PadMode::Zero) {
                                if src[s] > best {
                                    best = src[s];
                                    best_i = s;
                                }
                            }
                        }
                    }
                    dst[oy * wo + ox] = best;
                    idx[oy * wo + ox] = best_i as u32;
                }
            }
        });
    Tensor::from_op("max_pool2d", out, vec![n, c, ho, wo], &[x], move |g, _, _| {
        let mut gx = vec![T::zero(); n * c * h * w];
        gx.par_chunks_mut(h * w)
            .zip(g.par_chunks(ho * wo))
            .zip(arg.par_chunks(ho * wo))
            .for_each(|((dst, src), idx)| {
                for (&v, &i) in src.iter().zip(idx) {
                    dst[i as usize] += v;
                }
            });
        vec![Some(gx)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_two_by_two() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let y = avg_pool2d(&x, 2, 1, PadMode::Zero, Padding::default()).unwrap();
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn kernel_one_is_identity() {
        let x = Tensor::<f64>::from_vec((0..12).map(|v| v as f64).collect(), &[1, 3, 2, 2]).unwrap();
        let y = avg_pool2d(&x, 1, 1, PadMode::Zero, Padding::default()).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn replicate_padding_keeps_constants() {
        let x = Tensor::<f64>::full(&[1, 2, 3, 5], 0.7);
        let pad = Padding { top: 1, left: 1, bottom: 0, right: 0 };
        let y = avg_pool2d(&x, 2, 1, PadMode::Replicate, pad).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn window_larger_than_input() {
        let x = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        assert!(avg_pool2d(&x, 3, 1, PadMode::Zero, Padding::default()).is_err());
    }

    #[test]
    fn max_pool_picks_maximum() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 5.0, 3.0, 2.0], &[1, 1, 2, 2]).unwrap();
        let y = max_pool2d(&x, 2, 2, 0).unwrap();
        assert_eq!(y.data(), &[5.0]);
    }
}
