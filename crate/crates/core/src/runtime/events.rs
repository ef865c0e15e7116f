//! Active-index event representation of binary spike frames.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Result};
use crate::snn::SpikeRaster;

/// Strictly increasing active indices of one frame.
pub fn to_events(frame: &[u8]) -> Vec<u32> {
    frame
        .iter()
        .enumerate()
        .filter(|(_, &s)| s != 0)
        .map(|(i, _)| i as u32)
        .collect()
}

/// Inverse of [`to_events`].
pub fn from_events(indices: &[u32], width: usize) -> Result<Vec<u8>> {
    let mut frame = vec![0u8; width];
    let mut last: Option<u32> = None;
    for &i in indices {
        if last.is_some_and(|p| i <= p) {
            return validation_err(format!("event index {i} repeated or out of order"));
        }
        if i as usize >= width {
            return validation_err(format!("event index {i} outside width {width}"));
        }
        frame[i as usize] = 1;
        last = Some(i);
    }
    Ok(frame)
}

/// Per-time-step event lists of a raster.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventList {
    pub width: usize,
    pub steps: Vec<Vec<u32>>,
}

impl EventList {
    pub fn from_raster(raster: &SpikeRaster) -> Self {
        Self {
            width: raster.neurons(),
            steps: (0..raster.time_steps()).map(|t| to_events(raster.frame(t))).collect(),
        }
    }

    pub fn to_raster(&self) -> Result<SpikeRaster> {
        let mut data = Vec::with_capacity(self.steps.len() * self.width);
        for step in &self.steps {
            data.extend(from_events(step, self.width)?);
        }
        if self.steps.is_empty() {
            return shape_err("event list has no time steps");
        }
        SpikeRaster::from_vec(self.steps.len(), self.width, data)
    }

    pub fn event_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }
}
