use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// Dense binary spike record of `time_steps` frames over `neurons` channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpikeRaster {
    time_steps: usize,
    neurons: usize,
    data: Vec<u8>,
}

impl SpikeRaster {
    pub fn zeros(time_steps: usize, neurons: usize) -> Self {
        Self {
            time_steps,
            neurons,
            data: vec![0; time_steps * neurons],
        }
    }

    /// Builds a raster from row-major 0/1 bytes.
    pub fn from_vec(time_steps: usize, neurons: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != time_steps * neurons {
            return shape_err(format!(
                "raster data has {} entries, expected {}x{}",
                data.len(),
                time_steps,
                neurons
            ));
        }
        if data.iter().any(|&b| b > 1) {
            return Err(crate::Error::Validation("raster entries must be 0 or 1".into()));
        }
        Ok(Self {
            time_steps,
            neurons,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let neurons = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != neurons) {
            return shape_err("ragged raster rows");
        }
        Self::from_vec(rows.len(), neurons, rows.concat())
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        &self.data[t * self.neurons..(t + 1) * self.neurons]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [u8] {
        &mut self.data[t * self.neurons..(t + 1) * self.neurons]
    }

    pub fn get(&self, t: usize, n: usize) -> u8 {
        self.data[t * self.neurons + n]
    }

    pub fn set(&mut self, t: usize, n: usize, spike: bool) {
        self.data[t * self.neurons + n] = spike as u8;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn spike_count(&self) -> usize {
        self.data.iter().map(|&b| b as usize).sum()
    }

    /// Mean firing rate over all neurons and steps.
    pub fn rate(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.spike_count() as f64 / self.data.len() as f64
        }
    }

    /// First `t` frames.
    pub fn truncated(&self, t: usize) -> Self {
        let t = t.min(self.time_steps);
        Self {
            time_steps: t,
            neurons: self.neurons,
            data: self.data[..t * self.neurons].to_vec(),
        }
    }
}
