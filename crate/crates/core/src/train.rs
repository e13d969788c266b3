//! Training-loop plumbing shared by the constrained trainer and the baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::SgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Halve the learning rate after 50%, 75% and 90% of the epochs.
    StepDecay,
}

impl LrSchedule {
    pub fn learning_rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay => {
                let passed = [0.5, 0.75, 0.9]
                    .iter()
                    .filter(|&&f| epoch as f64 >= (f * epochs as f64).floor())
                    .count();
                base / f64::from(1u32 << passed)
            }
        }
    }
}

/// Optimizer, batching and augmented-Lagrangian schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epoch length `T`; each epoch runs `T − 1` mini-batch steps.
    /// Defaults to `max(⌈n / B⌉, 2)`.
    pub epoch_length: Option<usize>,
    pub sgd: SgdConfig,
    pub lr_schedule: LrSchedule,
    /// Dual-variable learning rate μ₂.
    pub dual_lr: f64,
    /// Penalty multiplier γ > 1.
    pub penalty_multiplier: f64,
    /// Initial penalty weights (β₁, β₂).
    pub initial_penalty: (f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            epoch_length: None,
            sgd: SgdConfig::default(),
            lr_schedule: LrSchedule::Constant,
            dual_lr: 1.0,
            penalty_multiplier: 1.5,
            initial_penalty: (1.0, 1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.epoch_length == Some(0) {
            return Err(Error::config("epoch length must be positive"));
        }
        self.sgd.validate()?;
        if !(self.dual_lr > 0.0 && self.dual_lr.is_finite()) {
            return Err(Error::config("dual learning rate must be positive"));
        }
        if !(self.penalty_multiplier > 1.0 && self.penalty_multiplier.is_finite()) {
            return Err(Error::config("penalty multiplier must exceed 1"));
        }
        let (b1, b2) = self.initial_penalty;
        if !(b1 > 0.0 && b2 > 0.0 && b1.is_finite() && b2.is_finite()) {
            return Err(Error::config("initial penalties must be positive"));
        }
        Ok(())
    }

    /// Number of optimizer steps per epoch for a training set of size `n`.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        let t = self
            .epoch_length
            .unwrap_or_else(|| n.div_ceil(self.batch_size).max(2));
        t.saturating_sub(1)
    }
}

/// Uniform with-replacement batch indices. ID and wild batches come from
/// separate streams so that ID-only and ID+wild trainers draw the same ID
/// batches under one seed.
pub(crate) struct BatchSampler {
    id_rng: ChaCha8Rng,
    wild_rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(seed: u64) -> Self {
        let mut id_rng = ChaCha8Rng::seed_from_u64(seed);
        id_rng.set_stream(1);
        let mut wild_rng = ChaCha8Rng::seed_from_u64(seed);
        wild_rng.set_stream(2);
        Self { id_rng, wild_rng }
    }

    pub fn id_batch(&mut self, n: usize, b: usize) -> Vec<usize> {
        (0..b).map(|_| self.id_rng.random_range(0..n)).collect()
    }

    pub fn wild_batch(&mut self, m: usize, b: usize) -> Vec<usize> {
        (0..b).map(|_| self.wild_rng.random_range(0..m)).collect()
    }
}

/// Pairwise (cascade) summation; fixed reduction order.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_halves_at_milestones() {
        let s = LrSchedule::StepDecay;
        assert_eq!(s.learning_rate(1.0, 0, 100), 1.0);
        assert_eq!(s.learning_rate(1.0, 49, 100), 1.0);
        assert_eq!(s.learning_rate(1.0, 50, 100), 0.5);
        assert_eq!(s.learning_rate(1.0, 75, 100), 0.25);
        assert_eq!(s.learning_rate(1.0, 99, 100), 0.125);
        assert_eq!(LrSchedule::Constant.learning_rate(0.3, 99, 100), 0.3);
    }

    #[test]
    fn steps_per_epoch_defaults() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.steps_per_epoch(2000), 15);
        assert_eq!(cfg.steps_per_epoch(10), 1);
        let cfg = TrainConfig {
            epoch_length: Some(5),
            ..TrainConfig::default()
        };
        assert_eq!(cfg.steps_per_epoch(2000), 4);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            penalty_multiplier: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
