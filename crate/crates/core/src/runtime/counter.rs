use serde::{Deserialize, Serialize};

/// Operation counts of one or more inferences.
///
/// Per-layer vectors cover hidden layers followed by the readout.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    /// Weight-pair accumulations actually performed.
    pub ac_count: u64,
    pub neuron_updates: u64,
    /// Accumulations a dense kernel would perform: `sum_l T * nnz(mask_l)`.
    pub dense_equivalent_macs: u64,
    /// Identity-skip additions (not synaptic events).
    pub skip_accumulates: u64,
    pub layer_ac: Vec<u64>,
    pub layer_dense: Vec<u64>,
    pub overflow: bool,
}

impl OpCounter {
    pub fn with_layers(layers: usize) -> Self {
        Self {
            layer_ac: vec![0; layers],
            layer_dense: vec![0; layers],
            ..Self::default()
        }
    }

    /// Accumulations in the first `hidden` layers only.
    pub fn hidden_ac(&self, hidden: usize) -> u64 {
        self.layer_ac.iter().take(hidden).sum()
    }

    /// `ac_count / dense_equivalent_macs` of one layer.
    pub fn layer_ratio(&self, layer: usize) -> f64 {
        match self.layer_dense.get(layer) {
            Some(&d) if d > 0 => self.layer_ac[layer] as f64 / d as f64,
            _ => 0.0,
        }
    }

    /// Fraction of dense work avoided.
    pub fn savings(&self) -> f64 {
        if self.dense_equivalent_macs == 0 {
            0.0
        } else {
            1.0 - self.ac_count as f64 / self.dense_equivalent_macs as f64
        }
    }

    /// Adds another counter (per-layer vectors must match or be empty).
    pub fn merge(&mut self, other: &OpCounter) {
        self.ac_count += other.ac_count;
        self.neuron_updates += other.neuron_updates;
        self.dense_equivalent_macs += other.dense_equivalent_macs;
        self.skip_accumulates += other.skip_accumulates;
        if self.layer_ac.is_empty() {
            self.layer_ac = vec![0; other.layer_ac.len()];
            self.layer_dense = vec![0; other.layer_dense.len()];
        }
        for (a, b) in self.layer_ac.iter_mut().zip(&other.layer_ac) {
            *a += b;
        }
        for (a, b) in self.layer_dense.iter_mut().zip(&other.layer_dense) {
            *a += b;
        }
        self.overflow |= other.overflow;
    }
}
