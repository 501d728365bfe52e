//! Reconstruction metrics and dataset-level evaluation.

use mxr_tensor::no_grad;

use crate::error::{Error, Result};
use crate::model::{MxrUnet, SIZE_MULTIPLE};
use crate::nn::Mode;
use crate::raster::{HyperCube, Raster, RgbImage, Sample};
use crate::train::NormalizationStats;

/// Denominator guard for the relative error (ground truth can be 0 in dark pixels).
pub const MRAE_EPS: f64 = 1e-6;

fn check_pair(op: &'static str, pred: &[f32], target: &[f32]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::dimension(op, format!("{} vs {} values", pred.len(), target.len())));
    }
    Ok(())
}

/// Mean over all voxels of `|pred - target| / (target + eps)`.
pub fn mrae_slice(pred: &[f32], target: &[f32], eps: f64) -> Result<f64> {
    check_pair("mrae", pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (p as f64 - t as f64).abs() / (t as f64 + eps))
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn rmse_slice(pred: &[f32], target: &[f32]) -> Result<f64> {
    check_pair("rmse", pred, target)?;
    let sum: f64 = pred.iter().zip(target).map(|(&p, &t)| (p as f64 - t as f64).powi(2)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

fn same_shape(op: &'static str, a: &Raster, b: &Raster) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::dimension(op, format!("shapes differ: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

pub fn mrae(pred: &HyperCube, target: &HyperCube, eps: f64) -> Result<f64> {
    same_shape("mrae", pred, target)?;
    mrae_slice(pred.data(), target.data(), eps)
}

pub fn rmse(pred: &HyperCube, target: &HyperCube) -> Result<f64> {
    same_shape("rmse", pred, target)?;
    rmse_slice(pred.data(), target.data())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub mrae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mrae: f64,
    pub rmse: f64,
    pub per_image: Vec<ImageMetrics>,
}

impl MetricReport {
    /// Aggregates are plain means of the per-image values.
    pub fn from_images(per_image: Vec<ImageMetrics>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::Config("no images to evaluate".into()));
        }
        let n = per_image.len() as f64;
        let mrae = per_image.iter().map(|m| m.mrae).sum::<f64>() / n;
        let rmse = per_image.iter().map(|m| m.rmse).sum::<f64>() / n;
        Ok(Self { mrae, rmse, per_image })
    }

    pub fn count(&self) -> usize {
        self.per_image.len()
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<24} {:>10} {:>10}\n", "image", "MRAE", "RMSE");
        for m in &self.per_image {
            s += &format!("{:<24} {:>10.6} {:>10.6}\n", m.name, m.mrae, m.rmse);
        }
        s += &format!("{:<24} {:>10.6} {:>10.6}\n", format!("mean ({})", self.count()), self.mrae, self.rmse);
        s
    }

    pub fn records(&self) -> String {
        let mut s = String::new();
        for m in &self.per_image {
            s += &format!("kind=image name={} mrae={:.9} rmse={:.9}\n", m.name, m.mrae, m.rmse);
        }
        s += &format!("kind=mean count={} mrae={:.9} rmse={:.9}\n", self.count(), self.mrae, self.rmse);
        s
    }
}

/// Next multiple of the model's size constraint.
pub fn padded_extent(n: usize) -> usize {
    n.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE
}

/// Eval-mode reconstruction of one RGB image in data units: normalize,
/// reflect-pad to a multiple of 32, forward, crop back, denormalize.
pub fn predict(model: &MxrUnet<f32>, rgb: &RgbImage, stats: &NormalizationStats) -> Result<HyperCube> {
    let _g = no_grad();
    let (h, w) = (rgb.height(), rgb.width());
    let (ph, pw) = (padded_extent(h), padded_extent(w));
    let x = stats.rgb.normalize(rgb)?;
    let x = if (ph, pw) == (h, w) { x } else { x.pad_reflect(ph, pw)? };
    let y = model.forward(&x.to_tensor()?, Mode::Eval)?;
    let y = Raster::from_tensor(&y, 0)?;
    let y = if (ph, pw) == (h, w) { y } else { y.crop(h, w)? };
    stats.cube.denormalize(&y)
}

/// Per-image metrics of model predictions against targets. With
/// `clamp_unit`, predictions are clipped to [0, 1] first (for datasets
/// stored in unit range).
pub fn evaluate_dataset(
    model: &MxrUnet<f32>,
    samples: &[Sample],
    stats: &NormalizationStats,
    clamp_unit: bool,
) -> Result<MetricReport> {
    let mut per_image = Vec::with_capacity(samples.len());
    for s in samples {
        let mut pred = predict(model, &s.rgb, stats)?;
        if clamp_unit {
            pred.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        per_image.push(ImageMetrics {
            name: s.name.clone(),
            mrae: mrae(&pred, &s.cube, MRAE_EPS)?,
            rmse: rmse(&pred, &s.cube)?,
        });
    }
    MetricReport::from_images(per_image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(mrae_slice(&[1.0, 3.0], &[2.0, 2.0], 0.0).unwrap(), 0.5);
        assert!((rmse_slice(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(mrae_slice(&[1.0], &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn aggregate_is_mean() {
        let m = |v| ImageMetrics { name: String::new(), mrae: v, rmse: v };
        let r = MetricReport::from_images(vec![m(0.1), m(0.3)]).unwrap();
        assert!((r.mrae - 0.2).abs() < 1e-15);
    }

    #[test]
    fn padding_extent() {
        assert_eq!(padded_extent(64), 64);
        assert_eq!(padded_extent(70), 96);
    }
}
