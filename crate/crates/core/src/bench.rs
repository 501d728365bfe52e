//! Forward-pass latency measurement.

use std::time::Instant;

use mxr_tensor::{no_grad, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::MxrUnet;
use crate::nn::Mode;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub model: String,
    /// Input height and width.
    pub input_size: (usize, usize),
    pub threads: usize,
    pub warmup: usize,
    /// Seconds per forward pass of one image, in run order.
    pub times: Vec<f64>,
    pub median: f64,
    pub mean: f64,
}

impl LatencyReport {
    pub fn runs(&self) -> usize {
        self.times.len()
    }

    pub fn summary(&self) -> String {
        format!(
            "model={} size={}x{} threads={} warmup={} runs={} median_s={:.6} mean_s={:.6}",
            self.model,
            self.input_size.0,
            self.input_size.1,
            self.threads,
            self.warmup,
            self.runs(),
            self.median,
            self.mean
        )
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times eval-mode forward passes of a single `size x size` image on a
/// dedicated pool of `threads` workers.
pub fn benchmark_latency(
    model: &MxrUnet<f32>,
    size: usize,
    warmup: usize,
    runs: usize,
    threads: usize,
) -> Result<LatencyReport> {
    if warmup < 3 || runs < 10 || threads == 0 {
        return Err(Error::Contract(format!(
            "need warmup >= 3, runs >= 10 and threads >= 1 (got {warmup}, {runs}, {threads})"
        )));
    }
    let x: Tensor<f32> = mxr_tensor::init::uniform(&[1, model.config.in_channels, size, size], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0))?;
    model.check_input(&x)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    let times = pool.install(|| -> Result<Vec<f64>> {
        let _g = no_grad();
        for _ in 0..warmup {
            model.forward(&x, Mode::Eval)?;
        }
        let mut times = Vec::with_capacity(runs);
        for _ in 0..runs {
            let start = Instant::now();
            let y = model.forward(&x, Mode::Eval)?;
            times.push(start.elapsed().as_secs_f64());
            drop(y);
        }
        Ok(times)
    })?;
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    Ok(LatencyReport {
        model: format!("{}-unet(width={})", model.config.encoder_depth, model.config.width_multiplier),
        input_size: (size, size),
        threads,
        warmup,
        median: median(&times),
        mean,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_sorted_runs() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
