//! Direct spike encoders: delta modulation and threshold crossing.

use serde::{Deserialize, Serialize};

use super::raster::SpikeRaster;
use crate::error::{shape_err, validation_err, Result};

/// Decay of the running mean of |Δsignal| driving the adaptive threshold.
pub const DELTA_EMA_DECAY: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    DeltaModulation,
    ThresholdCrossing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub base_threshold: f64,
    pub adapt_rate: f64,
    #[serde(default)]
    pub per_channel_thresholds: Option<Vec<f64>>,
}

impl EncoderConfig {
    pub fn delta(base_threshold: f64, adapt_rate: f64) -> Self {
        Self {
            kind: EncoderKind::DeltaModulation,
            base_threshold,
            adapt_rate,
            per_channel_thresholds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_threshold > 0.0) {
            return validation_err("base_threshold must be positive");
        }
        if !(0.0..=1.0).contains(&self.adapt_rate) {
            return validation_err("adapt_rate must lie in [0, 1]");
        }
        if let Some(th) = &self.per_channel_thresholds {
            if th.iter().any(|&t| !(t > 0.0)) {
                return validation_err("per-channel thresholds must be positive");
            }
        }
        Ok(())
    }
}

fn delta_channel(signal: &[f64], base: f64, adapt_rate: f64, mut emit: impl FnMut(usize, bool, bool)) {
    let mut reference = signal[0];
    let mut ema = 0.0;
    for t in 1..signal.len() {
        let threshold = base * (1.0 + adapt_rate * ema);
        let x = signal[t];
        let on = x - reference > threshold;
        let off = !on && reference - x > threshold;
        if on || off {
            reference = x;
        }
        emit(t - 1, on, off);
        ema = DELTA_EMA_DECAY * ema + (1.0 - DELTA_EMA_DECAY) * (x - signal[t - 1]).abs();
    }
}

/// Delta-modulation encoding of one signal of `T + 1` samples into a
/// `T x 2` raster (channel 0 = ON, channel 1 = OFF). Frame `k` reports the
/// decision taken at sample `k + 1`.
pub fn delta_encode(signal: &[f64], config: &EncoderConfig) -> Result<SpikeRaster> {
    if config.kind != EncoderKind::DeltaModulation {
        return validation_err("delta_encode requires a delta-modulation config");
    }
    config.validate()?;
    if signal.len() < 2 {
        return validation_err("delta_encode needs at least two samples");
    }
    let mut raster = SpikeRaster::zeros(signal.len() - 1, 2);
    delta_channel(signal, config.base_threshold, config.adapt_rate, |t, on, off| {
        raster.set(t, 0, on);
        raster.set(t, 1, off);
    });
    Ok(raster)
}

/// Delta encoding of a `(T + 1) x C` feature matrix into `T x 2C`, with
/// channel `c` mapped to outputs `2c` (ON) and `2c + 1` (OFF).
pub fn delta_encode_channels(
    features: &[f64],
    channels: usize,
    config: &EncoderConfig,
) -> Result<SpikeRaster> {
    if config.kind != EncoderKind::DeltaModulation {
        return validation_err("delta_encode requires a delta-modulation config");
    }
    config.validate()?;
    if channels == 0 || !features.len().is_multiple_of(channels) {
        return shape_err("feature matrix is not a multiple of the channel count");
    }
    let samples = features.len() / channels;
    if samples < 2 {
        return validation_err("delta_encode needs at least two samples");
    }
    if let Some(th) = &config.per_channel_thresholds {
        if th.len() != channels {
            return shape_err(format!("{} thresholds for {} channels", th.len(), channels));
        }
    }
    let mut raster = SpikeRaster::zeros(samples - 1, 2 * channels);
    let mut column = vec![0.0; samples];
    for c in 0..channels {
        for (t, v) in column.iter_mut().enumerate() {
            *v = features[t * channels + c];
        }
        let base = config
            .per_channel_thresholds
            .as_ref()
            .map_or(config.base_threshold, |th| th[c]);
        delta_channel(&column, base, config.adapt_rate, |t, on, off| {
            raster.set(t, 2 * c, on);
            raster.set(t, 2 * c + 1, off);
        });
    }
    Ok(raster)
}

/// Threshold-crossing encoding: `spike(t, c) = features[t, c] >= thresholds[c]`.
pub fn threshold_encode(features: &[f64], thresholds: &[f64]) -> Result<SpikeRaster> {
    let channels = thresholds.len();
    if channels == 0 || !features.len().is_multiple_of(channels) {
        return shape_err(format!(
            "{} features do not tile {} thresholds",
            features.len(),
            channels
        ));
    }
    if thresholds.iter().any(|&t| !(t > 0.0)) {
        return validation_err("thresholds must be strictly positive");
    }
    let data = features
        .iter()
        .enumerate()
        .map(|(i, &x)| (x >= thresholds[i % channels]) as u8)
        .collect();
    SpikeRaster::from_vec(features.len() / channels, channels, data)
}
