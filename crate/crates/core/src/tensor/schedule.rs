use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-epoch learning rate: linear warmup from 0, then half-cosine decay to `min_rate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_rate: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub min_rate: f64,
}

impl LrSchedule {
    pub fn new(base_rate: f64, warmup_epochs: usize, total_epochs: usize, min_rate: f64) -> Result<Self> {
        let s = Self { base_rate, warmup_epochs, total_epochs, min_rate };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::Argument(format!(
                "warmup epochs {} exceed total epochs {}",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(self.base_rate.is_finite() && self.min_rate >= 0.0 && self.min_rate <= self.base_rate) {
            return Err(Error::Argument(format!(
                "need 0 <= min rate ({}) <= base rate ({})",
                self.min_rate, self.base_rate
            )));
        }
        Ok(())
    }

    pub fn rate(&self, epoch: usize) -> Result<f64> {
        cosine_lr(self, epoch)
    }
}

/// Learning rate at `epoch` in `0..=total_epochs`.
///
/// At `epoch == total_epochs` the rate is `min_rate`, also when there is no
/// decay phase at all.
pub fn cosine_lr(schedule: &LrSchedule, epoch: usize) -> Result<f64> {
    let LrSchedule { base_rate, warmup_epochs, total_epochs, min_rate } = *schedule;
    if epoch > total_epochs {
        return Err(Error::Argument(format!("epoch {epoch} outside 0..={total_epochs}")));
    }
    if epoch == total_epochs {
        return Ok(min_rate);
    }
    if epoch < warmup_epochs {
        return Ok(base_rate * epoch as f64 / warmup_epochs as f64);
    }
    let progress = (epoch - warmup_epochs) as f64 / (total_epochs - warmup_epochs) as f64;
    Ok(min_rate + 0.5 * (base_rate - min_rate) * (1.0 + (std::f64::consts::PI * progress).cos()))
}
