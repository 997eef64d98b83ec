use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    /// `base · gamma^(number of milestones ≤ epoch)`.
    MultiStep {
        base: f64,
        milestones: Vec<usize>,
        gamma: f64,
    },
    /// `base · (1 + cos(π·epoch/total)) / 2`.
    Cosine { base: f64 },
}

impl LrSchedule {
    /// Milestones at 70% and 90% of `epochs`, decay 0.1. Short runs where
    /// both land on the same epoch get a single milestone.
    pub fn step_default(base: f64, epochs: usize) -> Self {
        let mut milestones = vec![epochs * 7 / 10, epochs * 9 / 10];
        milestones.dedup();
        LrSchedule::MultiStep {
            base,
            milestones,
            gamma: 0.1,
        }
    }

    pub fn base(&self) -> f64 {
        match self {
            LrSchedule::MultiStep { base, .. } | LrSchedule::Cosine { base } => *base,
        }
    }

    pub fn validate(&self, epochs: usize) -> Result<()> {
        if !(self.base() > 0.0 && self.base().is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.base()
            )));
        }
        if let LrSchedule::MultiStep {
            milestones, gamma, ..
        } = self
        {
            if milestones.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "milestones must be strictly increasing".into(),
                ));
            }
            if milestones.last().is_some_and(|&m| m >= epochs) {
                return Err(Error::Config(format!(
                    "milestones must be < epochs ({epochs})"
                )));
            }
            if gamma.is_nan() || *gamma <= 0.0 {
                return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
            }
        }
        Ok(())
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: f64, total_epochs: usize) -> f64 {
    match schedule {
        LrSchedule::MultiStep {
            base,
            milestones,
            gamma,
        } => {
            let passed = milestones.iter().filter(|&&m| m as f64 <= epoch).count();
            base * gamma.powi(passed as i32)
        }
        LrSchedule::Cosine { base } => {
            base * 0.5 * (1.0 + (PI * epoch / total_epochs as f64).cos())
        }
    }
}
