use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-cycle learning-rate and momentum policy over fractional epochs:
/// a half-cosine warm-up to the peak, then a half-cosine anneal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneCycleSchedule {
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_end: f64,
    pub mom_start: f64,
    pub mom_trough: f64,
    /// Warm-up length in epochs.
    pub phase1: f64,
    /// Anneal length in epochs.
    pub phase2: f64,
}

impl Default for OneCycleSchedule {
    fn default() -> Self {
        Self {
            lr_start: 1e-5,
            lr_peak: 1e-3,
            lr_end: 1e-9,
            mom_start: 0.95,
            mom_trough: 0.85,
            phase1: 60.0,
            phase2: 140.0,
        }
    }
}

/// `a` at `w = 0`, `b` at `w = 1`; exact at both ends.
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a * (1.0 - w) + b * w
}

/// Half-cosine ramp from 0 at `t = 0` to 1 at `t = len`.
fn ramp(t: f64, len: f64) -> f64 {
    (1.0 - (PI * t / len).cos()) / 2.0
}

impl OneCycleSchedule {
    /// Same shape with both phases scaled so the cycle spans `epochs`.
    pub fn compressed(self, epochs: f64) -> Self {
        let k = epochs / self.total();
        Self { phase1: self.phase1 * k, phase2: self.phase2 * k, ..self }
    }

    pub fn total(&self) -> f64 {
        self.phase1 + self.phase2
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_start > 0.0
            && self.lr_peak > 0.0
            && self.lr_end > 0.0
            && self.lr_peak >= self.lr_start.max(self.lr_end)
            && (0.0..1.0).contains(&self.mom_start)
            && (0.0..1.0).contains(&self.mom_trough)
            && self.phase1 > 0.0
            && self.phase2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid one-cycle schedule {self:?}")))
        }
    }

    fn check(&self, t: f64) -> Result<()> {
        if t.is_finite() && (0.0..=self.total()).contains(&t) {
            Ok(())
        } else {
            Err(Error::Contract(format!("schedule position {t} outside [0, {}]", self.total())))
        }
    }

    fn warmup_weight(&self, t: f64) -> f64 {
        ramp(t, self.phase1)
    }

    fn anneal_weight(&self, t: f64) -> f64 {
        ramp(t - self.phase1, self.phase2)
    }

    /// Learning rate at `t` epochs into the cycle.
    pub fn lr_at(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(if t <= self.phase1 {
            lerp(self.lr_start, self.lr_peak, self.warmup_weight(t))
        } else {
            lerp(self.lr_peak, self.lr_end, self.anneal_weight(t))
        })
    }

    /// Momentum (Adam beta1) at `t`, mirroring the learning rate.
    pub fn mom_at(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(if t <= self.phase1 {
            lerp(self.mom_start, self.mom_trough, self.warmup_weight(t))
        } else {
            lerp(self.mom_trough, self.mom_start, self.anneal_weight(t))
        })
    }

    /// Both anneal-phase formulas evaluated at the phase boundary.
    pub fn anneal_at_boundary(&self) -> (f64, f64) {
        let w = self.anneal_weight(self.phase1);
        (lerp(self.lr_peak, self.lr_end, w), lerp(self.mom_trough, self.mom_start, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs()
    }

    #[test]
    fn anchors() {
        let s = OneCycleSchedule::default();
        assert!(close(s.lr_at(0.0).unwrap(), 1e-5));
        assert!(close(s.lr_at(60.0).unwrap(), 1e-3));
        assert!(close(s.lr_at(200.0).unwrap(), 1e-9));
        assert!(close(s.lr_at(30.0).unwrap(), 5.05e-4));
        assert!(close(s.mom_at(30.0).unwrap(), 0.90));
        assert!(close(s.mom_at(200.0).unwrap(), 0.95));
        assert_eq!(s.anneal_at_boundary(), (s.lr_at(60.0).unwrap(), s.mom_at(60.0).unwrap()));
    }

    #[test]
    fn outside_range_is_contract_error() {
        let s = OneCycleSchedule::default();
        assert!(matches!(s.lr_at(-0.1), Err(Error::Contract(_))));
        assert!(matches!(s.mom_at(200.5), Err(Error::Contract(_))));
    }

    #[test]
    fn compression_keeps_proportions() {
        let s = OneCycleSchedule::default().compressed(20.0);
        assert_eq!((s.phase1, s.phase2), (6.0, 14.0));
        assert!(close(s.lr_at(6.0).unwrap(), 1e-3));
    }
}
