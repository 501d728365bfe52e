//! One-cycle AdamW training with augmentation and normalization.

mod adamw;
mod augment;
mod normalize;
mod schedule;

pub use adamw::{adamw_update, AdamW, AdamWConfig, Moments, StepParams};
pub use augment::{augment, AugmentConfig, AugmentDraw};
pub use normalize::{ChannelStats, NormalizationStats};
pub use schedule::OneCycleSchedule;

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{total_loss, LossNetwork, LossWeights};
use crate::metrics::evaluate_dataset;
use crate::model::MxrUnet;
use crate::nn::{Mode, Module};
use crate::raster::{Raster, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Square random crop per sample (multiple of 32); 0 trains on whole images.
    pub crop: usize,
    /// Shuffle sample order every epoch.
    pub shuffle: bool,
    pub augment: bool,
    pub augmentation: AugmentConfig,
    /// The cycle is compressed to `epochs` when its own length differs.
    pub schedule: OneCycleSchedule,
    pub optimizer: AdamWConfig,
    pub loss: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 8,
            crop: 256,
            shuffle: true,
            augment: true,
            augmentation: AugmentConfig::default(),
            schedule: OneCycleSchedule::default(),
            optimizer: AdamWConfig::default(),
            loss: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !self.crop.is_multiple_of(32) {
            return Err(Error::Config(format!("crop {} must be a multiple of 32", self.crop)));
        }
        self.augmentation.validate()?;
        self.schedule.validate()?;
        self.loss.validate()
    }

    /// Schedule actually followed over `epochs`.
    pub fn effective_schedule(&self) -> OneCycleSchedule {
        if self.epochs > 0 && self.schedule.total() != self.epochs as f64 {
            self.schedule.compressed(self.epochs as f64)
        } else {
            self.schedule
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub epoch: usize,
    pub iter: usize,
    /// Fractional epoch at which lr and momentum were evaluated.
    pub t: f64,
    pub lr: f64,
    pub momentum: f64,
    pub loss: f64,
    pub feature: [f64; 3],
    pub style: [f64; 3],
    pub pixel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_mrae: Option<f64>,
}

/// One line per record, `key=value` fields separated by spaces:
///
/// ```text
/// kind=iter epoch=E iter=I t=T lr=LR momentum=M loss=L feat=F1,F2,F3 style=S1,S2,S3 pixel=P
/// kind=epoch epoch=E mean_loss=L val_mrae=V|none
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub iterations: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl fmt::Display for IterRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [f1, f2, f3] = self.feature;
        let [s1, s2, s3] = self.style;
        write!(
            f,
            "kind=iter epoch={} iter={} t={:.6} lr={:.9e} momentum={:.9} loss={:.9e} feat={f1:.6e},{f2:.6e},{f3:.6e} style={s1:.6e},{s2:.6e},{s3:.6e} pixel={:.9e}",
            self.epoch, self.iter, self.t, self.lr, self.momentum, self.loss, self.pixel
        )
    }
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind=epoch epoch={} mean_loss={:.9e} val_mrae=", self.epoch, self.mean_loss)?;
        match self.val_mrae {
            Some(v) => write!(f, "{v:.9}"),
            None => write!(f, "none"),
        }
    }
}

impl TrainLog {
    /// Records in the order they were produced.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let mut iters = self.iterations.iter().peekable();
        for e in &self.epochs {
            while let Some(r) = iters.next_if(|r| r.epoch <= e.epoch) {
                out += &format!("{r}\n");
            }
            out += &format!("{e}\n");
        }
        for r in iters {
            out += &format!("{r}\n");
        }
        out
    }
}

/// Callbacks invoked as training progresses.
pub trait TrainObserver {
    fn on_iter(&mut self, _rec: &IterRecord) {}
    fn on_epoch(&mut self, _rec: &EpochRecord, _model: &MxrUnet<f32>, _opt: &AdamW<f32>) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

fn random_crop(s: &Sample, crop: usize, rng: &mut impl Rng) -> Result<(Raster, Raster)> {
    let (h, w) = (s.rgb.height(), s.rgb.width());
    if h < crop || w < crop {
        return Err(Error::dimension("crop", format!("sample {} is {h}x{w}, smaller than crop {crop}", s.name)));
    }
    let y0 = rng.random_range(0..=h - crop);
    let x0 = rng.random_range(0..=w - crop);
    let cut = |r: &Raster| {
        let mut data = Vec::with_capacity(r.channels() * crop * crop);
        for c in 0..r.channels() {
            for y in y0..y0 + crop {
                let at = r.index(c, y, x0);
                data.extend_from_slice(&r.data()[at..at + crop]);
            }
        }
        Raster::new(r.channels(), crop, crop, data)
    };
    Ok((cut(&s.rgb)?, cut(&s.cube)?))
}

/// Trains `model` in place. Per iteration: crop, augment, normalize,
/// forward, total loss, backward, AdamW step with lr and momentum taken
/// from the one-cycle schedule at the fractional epoch.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    model: &MxrUnet<f32>,
    train: &[Sample],
    val: &[Sample],
    stats: &NormalizationStats,
    loss_net: &LossNetwork<f32>,
    cfg: &TrainConfig,
    opt: &mut AdamW<f32>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok(log);
    }
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let schedule = cfg.effective_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let iters_per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut global = 0usize;

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for (iter, idx) in order.chunks(cfg.batch_size).enumerate() {
            let t = epoch as f64 + iter as f64 / iters_per_epoch as f64;
            let lr = schedule.lr_at(t)?;
            let momentum = schedule.mom_at(t)?;

            let mut rgbs = Vec::with_capacity(idx.len());
            let mut cubes = Vec::with_capacity(idx.len());
            for &i in idx {
                let s = &train[i];
                let (rgb, cube) = match cfg.crop {
                    0 => (s.rgb.clone(), s.cube.clone()),
                    c => random_crop(s, c, &mut rng)?,
                };
                let (rgb, cube) = if cfg.augment {
                    augment(&rgb, &cube, &cfg.augmentation, &mut rng)?
                } else {
                    (rgb, cube)
                };
                rgbs.push(stats.rgb.normalize(&rgb)?);
                cubes.push(stats.cube.normalize(&cube)?);
            }
            let x = Raster::batch(&rgbs.iter().collect::<Vec<_>>())?;
            let y = Raster::batch(&cubes.iter().collect::<Vec<_>>())?;

            let pred = model.forward(&x, Mode::Train)?;
            let terms = total_loss(&pred, &y, loss_net, &cfg.loss)?;
            let loss = terms.total.item()? as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { iteration: global, lr, terms: terms.summary() });
            }
            terms.total.backward()?;
            opt.step(model, lr, momentum)?;

            let rec = IterRecord {
                epoch,
                iter,
                t,
                lr,
                momentum,
                loss,
                feature: terms.feature,
                style: terms.style,
                pixel: terms.pixel,
            };
            observer.on_iter(&rec);
            log.iterations.push(rec);
            loss_sum += loss;
            global += 1;
        }
        let val_mrae = if val.is_empty() {
            None
        } else {
            Some(evaluate_dataset(model, val, stats, false)?.mrae)
        };
        let rec = EpochRecord { epoch, mean_loss: loss_sum / iters_per_epoch as f64, val_mrae };
        observer.on_epoch(&rec, model, opt)?;
        log.epochs.push(rec);
    }
    model.zero_grads();
    Ok(log)
}
