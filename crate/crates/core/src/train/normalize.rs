use mxr_tensor::{Float, Tensor};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Per-channel affine normalization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl ChannelStats {
    pub fn new(mean: Vec<f32>, std: Vec<f32>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::Config(format!("{} means vs {} stds", mean.len(), std.len())));
        }
        if let Some(s) = std.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("normalization std {s} must be positive")));
        }
        Ok(Self { mean, std })
    }

    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Population mean and std per channel over every pixel of every raster.
    /// Constant channels get std 1.
    pub fn compute(rasters: &[&Raster]) -> Result<Self> {
        let c = rasters.first().ok_or_else(|| Error::Config("no samples to compute statistics".into()))?.channels();
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        let mut count = 0usize;
        for r in rasters {
            if r.channels() != c {
                return Err(Error::dimension("channel_stats", format!("{} channels, expected {c}", r.channels())));
            }
            for ch in 0..c {
                for &v in r.channel(ch) {
                    sum[ch] += v as f64;
                    sq[ch] += (v as f64) * (v as f64);
                }
            }
            count += r.height() * r.width();
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let s = (q / n - m * m).max(0.0).sqrt();
                if s > 1e-6 { s as f32 } else { 1.0 }
            })
            .collect();
        Self::new(mean.into_iter().map(|m| m as f32).collect(), std)
    }

    fn check(&self, channels: usize) -> Result<()> {
        if channels == self.channels() {
            Ok(())
        } else {
            Err(Error::dimension("normalize", format!("{channels} channels, statistics cover {}", self.channels())))
        }
    }

    pub fn normalize(&self, r: &Raster) -> Result<Raster> {
        self.check(r.channels())?;
        let mut out = r.clone();
        let n = r.height() * r.width();
        for (ch, px) in out.data_mut().chunks_mut(n).enumerate() {
            let (m, s) = (self.mean[ch], self.std[ch]);
            px.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    pub fn denormalize(&self, r: &Raster) -> Result<Raster> {
        self.check(r.channels())?;
        let mut out = r.clone();
        let n = r.height() * r.width();
        for (ch, px) in out.data_mut().chunks_mut(n).enumerate() {
            let (m, s) = (self.mean[ch], self.std[ch]);
            px.iter_mut().for_each(|v| *v = *v * s + m);
        }
        Ok(out)
    }

    /// Differentiable inverse on an `[N, C, H, W]` tensor.
    pub fn denormalize_tensor<T: Float>(&self, t: &Tensor<T>) -> Result<Tensor<T>> {
        let s = t.shape();
        if s.len() != 4 {
            return Err(Error::dimension("denormalize", format!("expected [N, C, H, W], got {s:?}")));
        }
        self.check(s[1])?;
        let hw = s[2] * s[3];
        let per_elem = |v: &[f32]| -> Result<Tensor<T>> {
            let data = (0..t.numel()).map(|i| T::cast(v[(i / hw) % s[1]] as f64)).collect();
            Ok(Tensor::from_vec(data, s)?)
        };
        Ok(t.mul(&per_elem(&self.std)?)?.add(&per_elem(&self.mean)?)?)
    }
}

/// Statistics for the RGB input and the cube target.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub rgb: ChannelStats,
    pub cube: ChannelStats,
}

impl NormalizationStats {
    pub fn identity(rgb_channels: usize, cube_channels: usize) -> Self {
        Self { rgb: ChannelStats::identity(rgb_channels), cube: ChannelStats::identity(cube_channels) }
    }

    pub fn compute<'a>(pairs: impl IntoIterator<Item = (&'a Raster, &'a Raster)>) -> Result<Self> {
        let (rgbs, cubes): (Vec<&Raster>, Vec<&Raster>) = pairs.into_iter().unzip();
        Ok(Self { rgb: ChannelStats::compute(&rgbs)?, cube: ChannelStats::compute(&cubes)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_zero_mean() {
        let r = Raster::new(2, 2, 3, vec![0.1, 0.5, 0.9, 0.3, 0.2, 0.7, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]).unwrap();
        let stats = ChannelStats::compute(&[&r]).unwrap();
        let n = stats.normalize(&r).unwrap();
        for ch in 0..2 {
            let m: f32 = n.channel(ch).iter().sum::<f32>() / 6.0;
            assert!(m.abs() < 1e-6);
        }
        let back = stats.denormalize(&n).unwrap();
        for (a, b) in back.data().iter().zip(r.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(ChannelStats::identity(2).normalize(&r).unwrap(), r);
    }

    #[test]
    fn rejects_non_positive_std() {
        assert!(ChannelStats::new(vec![0.0], vec![0.0]).is_err());
    }
}
