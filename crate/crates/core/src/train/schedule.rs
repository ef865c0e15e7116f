use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Result};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Activity-regulariser weight.
    pub lambda_r: f64,
    /// Decoupled weight decay.
    pub lambda_w: f64,
    pub eta0: f64,
    pub eta_min: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k_start: f64,
    pub k_end: f64,
    pub k_warm_frac: f64,
    pub bntt_enabled: bool,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_r: 0.01,
            lambda_w: 1e-4,
            eta0: 1e-3,
            eta_min: 1e-5,
            epochs: 30,
            batch_size: 32,
            k_start: 0.5,
            k_end: 4.0,
            k_warm_frac: 0.6,
            bntt_enabled: false,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Defaults with BNTT switched on iff `time_steps >= 8`.
    pub fn for_time_steps(time_steps: usize) -> Self {
        Self {
            bntt_enabled: time_steps >= 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta0", self.eta0),
            ("eta_min", self.eta_min),
            ("k_start", self.k_start),
            ("k_end", self.k_end),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return validation_err(format!("{name} must be positive"));
            }
        }
        if self.lambda_r < 0.0 || self.lambda_w < 0.0 {
            return validation_err("regulariser weights must be non-negative");
        }
        if !(self.k_warm_frac > 0.0 && self.k_warm_frac <= 1.0) {
            return validation_err("k_warm_frac must lie in (0, 1]");
        }
        if self.eta_min > self.eta0 {
            return validation_err("eta_min must not exceed eta0");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return validation_err("epochs and batch_size must be positive");
        }
        Ok(())
    }
}

/// Fast-sigmoid surrogate for the Heaviside derivative.
pub fn surrogate_grad(u: f64, theta: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return validation_err("surrogate sharpness k must be positive");
    }
    Ok(surrogate(u - theta, k))
}

#[inline]
pub(crate) fn surrogate(x: f64, k: f64) -> f64 {
    let d = 1.0 + k * x.abs();
    1.0 / (d * d)
}

/// Surrogate sharpness for `epoch`: linear warm-up then plateau.
pub fn curriculum_k(epoch: usize, config: &TrainConfig) -> f64 {
    let warm = config.k_warm_frac * config.epochs as f64;
    let frac = if warm > 0.0 {
        (epoch as f64 / warm).min(1.0)
    } else {
        1.0
    };
    config.k_start + (config.k_end - config.k_start) * frac
}

/// Cosine-annealed learning rate over one cycle of `epochs`.
pub fn cosine_lr(epoch: usize, config: &TrainConfig) -> f64 {
    let phase = std::f64::consts::PI * epoch as f64 / config.epochs as f64;
    config.eta_min + 0.5 * (config.eta0 - config.eta_min) * (1.0 + phase.cos())
}
