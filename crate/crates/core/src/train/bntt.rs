//! Batch normalisation with separate statistics per time step.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Result};

pub const BNTT_MOMENTUM: f64 = 0.9;
pub const BNTT_EPS: f64 = 1e-5;
pub const MIN_SCALE: f64 = 1e-3;

/// Per-time-step affine and running statistics, each stored `T x N`
/// row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnttParams {
    pub time_steps: usize,
    pub width: usize,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Batch statistics at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnttParams {
    pub fn new(time_steps: usize, width: usize) -> Self {
        let n = time_steps * width;
        Self {
            time_steps,
            width,
            scale: vec![1.0; n],
            shift: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
        }
    }

    fn range(&self, t: usize) -> std::ops::Range<usize> {
        t * self.width..(t + 1) * self.width
    }

    /// Evaluation-mode map `x -> a x + b` at step `t` for neuron `i`.
    #[inline]
    pub fn eval_affine(&self, t: usize, i: usize) -> (f64, f64) {
        let k = t * self.width + i;
        let a = self.scale[k] / (self.running_var[k] + BNTT_EPS).sqrt();
        (a, self.shift[k] - a * self.running_mean[k])
    }

    /// Normalises one vector with running statistics.
    pub fn apply_eval(&self, t: usize, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let (a, b) = self.eval_affine(t, i);
            *v = a * *v + b;
        }
    }

    /// Mean and biased variance of a `batch x width` block.
    pub fn batch_stats(&self, batch: &[f64]) -> StepStats {
        let n = self.width;
        let rows = batch.len() / n;
        let mut mean = vec![0.0; n];
        for row in batch.chunks_exact(n) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; n];
        for row in batch.chunks_exact(n) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= rows as f64);
        StepStats { mean, var }
    }

    /// Folds batch statistics into the running estimates.
    pub fn update_running(&mut self, t: usize, stats: &StepStats) {
        let r = self.range(t);
        for ((rm, rv), (m, v)) in self.running_mean[r.clone()]
            .iter_mut()
            .zip(&mut self.running_var[r])
            .zip(stats.mean.iter().zip(&stats.var))
        {
            *rm = BNTT_MOMENTUM * *rm + (1.0 - BNTT_MOMENTUM) * m;
            *rv = BNTT_MOMENTUM * *rv + (1.0 - BNTT_MOMENTUM) * v;
        }
    }

    pub fn clamp_scale(&mut self) {
        self.scale.iter_mut().for_each(|s| *s = s.max(MIN_SCALE));
    }
}

/// Applies per-time-step normalisation to a batch (one row per sample).
/// Training mode uses the batch's statistics and updates the running
/// estimates; evaluation mode uses the running estimates.
pub fn bntt_apply(
    batch: &[Vec<f64>],
    t: usize,
    params: &mut BnttParams,
    training: bool,
) -> Result<Vec<Vec<f64>>> {
    if t >= params.time_steps {
        return validation_err(format!("time step {t} outside 0..{}", params.time_steps));
    }
    if batch.iter().any(|r| r.len() != params.width) {
        return shape_err("batch rows do not match normalisation width");
    }
    if !training {
        return Ok(batch
            .iter()
            .map(|row| {
                let mut out = row.clone();
                params.apply_eval(t, &mut out);
                out
            })
            .collect());
    }
    if batch.is_empty() {
        return validation_err("training-mode normalisation needs a non-empty batch");
    }
    let flat: Vec<f64> = batch.concat();
    let stats = params.batch_stats(&flat);
    let base = t * params.width;
    let out = batch
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, x)| {
                    let xhat = (x - stats.mean[i]) / (stats.var[i] + BNTT_EPS).sqrt();
                    params.scale[base + i] * xhat + params.shift[base + i]
                })
                .collect()
        })
        .collect();
    params.update_running(t, &stats);
    Ok(out)
}
