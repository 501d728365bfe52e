use rayon::prelude::*;

use crate::error::{dim_err, Result};
use crate::ops::nchw;
use crate::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates only.
    Eval,
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Float> BatchNormState<T> {
    /// Mean 0, variance 1, momentum 0.1, eps 1e-5.
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Per-channel normalization of `[N, C, H, W]` followed by `gamma * x + beta`.
pub fn batch_norm2d<T: Float>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: NormMode,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = nchw("batch_norm2d", x.shape())?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return dim_err(
            "batch_norm2d",
            format!("gamma {:?} / beta {:?} must be [{c}]", gamma.shape(), beta.shape()),
        );
    }
    if state.running_mean.len() != c || state.running_var.len() != c {
        return dim_err("batch_norm2d", format!("running stats sized for {} channels, input has {c}", state.running_mean.len()));
    }
    let plane = h * w;
    let count = n * plane;
    if count == 0 {
        return dim_err("batch_norm2d", "empty batch");
    }
    let xs = x.data();

    // Per-channel (mean, inv_std) used for normalization.
    let stats: Vec<(f64, f64)> = match mode {
        NormMode::Train => {
            let moments: Vec<(f64, f64)> = (0..c)
                .into_par_iter()
                .map(|ch| {
                    let vals = || (0..n).flat_map(move |b| xs[(b * c + ch) * plane..(b * c + ch + 1) * plane].iter());
                    let mean = vals().map(|v| v.as_f64()).sum::<f64>() / count as f64;
                    let var = vals().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / count as f64;
                    (mean, var)
                })
                .collect();
            // Population variance, so eval on the last training batch reproduces train mode.
            let m = state.momentum;
            for (ch, &(mean, var)) in moments.iter().enumerate() {
                let rm = state.running_mean[ch].as_f64();
                let rv = state.running_var[ch].as_f64();
                state.running_mean[ch] = T::cast((1.0 - m) * rm + m * mean);
                state.running_var[ch] = T::cast((1.0 - m) * rv + m * var);
            }
            moments
                .into_iter()
                .map(|(mean, var)| (mean, 1.0 / (var + state.eps).sqrt()))
                .collect()
        }
        NormMode::Eval => state
            .running_mean
            .iter()
            .zip(&state.running_var)
            .map(|(m, v)| (m.as_f64(), 1.0 / (v.as_f64() + state.eps).sqrt()))
            .collect(),
    };
    let mean: Vec<T> = stats.iter().map(|s| T::cast(s.0)).collect();
    let inv_std: Vec<T> = stats.iter().map(|s| T::cast(s.1)).collect();

    let mut out = vec![T::zero(); xs.len()];
    out.par_chunks_mut(plane)
        .zip(xs.par_chunks(plane))
        .enumerate()
        .for_each(|(row, (dst, src))| {
            let ch = row % c;
            let (m, s, g, b) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = g * ((v - m) * s) + b;
            }
        });

    Tensor::from_op("batch_norm2d", out, vec![n, c, h, w], &[x, gamma, beta], move |g, inputs, _| {
        let (x, gamma) = (&inputs[0], &inputs[1]);
        let xs = x.data();
        // Per channel: sum(g), sum(g * xhat).
        let sums: Vec<(f64, f64)> = (0..c)
            .into_par_iter()
            .map(|ch| {
                let (m, s) = (mean[ch], inv_std[ch]);
                let mut sg = 0.0;
                let mut sgx = 0.0;
                for b in 0..n {
                    let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                    for (&gv, &xv) in g[r.clone()].iter().zip(&xs[r]) {
                        sg += gv.as_f64();
                        sgx += (gv * ((xv - m) * s)).as_f64();
                    }
                }
                (sg, sgx)
            })
            .collect();
        let gx = x.tracks_grad().then(|| {
            let mut gx = vec![T::zero(); xs.len()];
            gx.par_chunks_mut(plane)
                .enumerate()
                .for_each(|(row, dst)| {
                    let ch = row % c;
                    let (m, s, gm) = (mean[ch], inv_std[ch], gamma.data()[ch]);
                    let src = &g[row * plane..(row + 1) * plane];
                    let xv = &xs[row * plane..(row + 1) * plane];
                    match mode {
                        NormMode::Eval => {
                            for (d, &gv) in dst.iter_mut().zip(src) {
                                *d = gv * gm * s;
                            }
                        }
                        NormMode::Train => {
                            let cnt = T::cast(count as f64);
                            let sg = T::cast(sums[ch].0);
                            let sgx = T::cast(sums[ch].1);
                            let k = gm * s / cnt;
                            for ((d, &gv), &x) in dst.iter_mut().zip(src).zip(xv) {
                                let xhat = (x - m) * s;
                                *d = k * (cnt * gv - sg - xhat * sgx);
                            }
                        }
                    }
                });
            gx
        });
        vec![
            gx,
            inputs[1].tracks_grad().then(|| sums.iter().map(|s| T::cast(s.1)).collect()),
            inputs[2].tracks_grad().then(|| sums.iter().map(|s| T::cast(s.0)).collect()),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalizes_to_beta() {
        let x = Tensor::<f64>::full(&[2, 3, 4, 4], 2.5);
        let mut st = BatchNormState::new(3);
        let y = batch_norm2d(&x, &Tensor::ones(&[3]), &Tensor::zeros(&[3]), &mut st, NormMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_matches_formula() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let mut st = BatchNormState::<f64> {
            running_mean: vec![2.0],
            running_var: vec![4.0],
            momentum: 0.1,
            eps: 1e-5,
        };
        let gamma = Tensor::from_vec(vec![1.5], &[1]).unwrap();
        let beta = Tensor::from_vec(vec![-0.5], &[1]).unwrap();
        let y = batch_norm2d(&x, &gamma, &beta, &mut st, NormMode::Eval).unwrap();
        let s = (4.0f64 + 1e-5).sqrt();
        let expect = [-1.5 / s - 0.5, -0.5, 1.5 / s - 0.5, 1.5 * 2.0 / s - 0.5];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // Eval never touches the running statistics.
        assert_eq!(st.running_mean, vec![2.0]);
    }

    #[test]
    fn train_updates_running_stats() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let mut st = BatchNormState::new(1);
        batch_norm2d(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), &mut st, NormMode::Train).unwrap();
        assert!((st.running_mean[0] - 0.25).abs() < 1e-12);
        // population variance 5/4
        assert!((st.running_var[0] - (0.9 + 0.1 * 1.25)).abs() < 1e-12);
    }

    #[test]
    fn eval_after_full_momentum_matches_train() {
        let x = Tensor::<f64>::from_vec(vec![0.5, -1.0, 2.0, 3.5, 1.0, 0.0, -2.0, 4.0], &[2, 1, 2, 2]).unwrap();
        let mut st = BatchNormState { momentum: 1.0, ..BatchNormState::new(1) };
        let (g, b) = (Tensor::ones(&[1]), Tensor::zeros(&[1]));
        let train = batch_norm2d(&x, &g, &b, &mut st, NormMode::Train).unwrap();
        let eval = batch_norm2d(&x, &g, &b, &mut st, NormMode::Eval).unwrap();
        for (a, e) in train.data().iter().zip(eval.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
