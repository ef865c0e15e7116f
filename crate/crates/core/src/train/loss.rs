use serde::{Deserialize, Serialize};

use super::schedule::TrainConfig;
use crate::error::{shape_err, validation_err, Result};
use crate::snn::{NetworkParams, SpikeRaster};

/// Objective components; `total = ce + activity + l2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub activity: f64,
    pub l2: f64,
}

impl LossBreakdown {
    pub fn from_parts(ce: f64, activity: f64, l2: f64) -> Self {
        Self {
            total: ce + activity + l2,
            ce,
            activity,
            l2,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.ce.is_finite() && self.activity.is_finite() && self.l2.is_finite()
    }
}

/// Softmax cross-entropy with spike counts as logits. Returns the loss and
/// the class probabilities.
pub(crate) fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let ce = sum.ln() + max - logits[label];
    (ce, exps.into_iter().map(|e| e / sum).collect())
}

/// Loss of one sample. The activity term covers hidden layers only.
pub fn compute_loss(
    counts: &[u32],
    label: usize,
    hidden: &[SpikeRaster],
    net: &NetworkParams,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    if counts.len() != net.num_classes() {
        return shape_err(format!(
            "{} counts for {} classes",
            counts.len(),
            net.num_classes()
        ));
    }
    if label >= counts.len() {
        return validation_err(format!("label {label} out of range 0..{}", counts.len()));
    }
    let logits: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (ce, _) = softmax_ce(&logits, label);
    // (1/T) sum_t mean_i s[t] is the raster's mean rate
    let activity = config.lambda_r * hidden.iter().map(SpikeRaster::rate).sum::<f64>();
    let l2 = config.lambda_w * net.weight_sq_norm();
    Ok(LossBreakdown::from_parts(ce, activity, l2))
}
