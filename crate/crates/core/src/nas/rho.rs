use crate::error::{validation_err, Result};
use crate::snn::{forward_dense, NetworkParams, SpikeRaster};

/// Number of batches in the activity estimate.
pub const RHO_BATCHES: usize = 5;

/// Activity estimate of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoEstimate {
    /// Output rate of each hidden layer.
    pub layer: Vec<f64>,
    /// Active fraction of each hidden layer's fan-in vector.
    pub input: Vec<f64>,
}

/// Mean rates from forward passes over exactly [`RHO_BATCHES`] batches.
pub fn estimate_rho(net: &NetworkParams, batches: &[&[SpikeRaster]]) -> Result<RhoEstimate> {
    if batches.len() != RHO_BATCHES {
        return validation_err(format!(
            "activity estimate needs {RHO_BATCHES} batches, got {}",
            batches.len()
        ));
    }
    let d = &net.descriptor;
    let mut layer_spikes = vec![0usize; d.depth];
    let mut input_spikes = 0usize;
    let mut samples = 0usize;
    for raster in batches.iter().flat_map(|b| b.iter()) {
        let out = forward_dense(net, raster)?;
        for (acc, h) in layer_spikes.iter_mut().zip(&out.hidden) {
            *acc += h.spike_count();
        }
        input_spikes += raster.spike_count();
        samples += 1;
    }
    if samples == 0 {
        return validation_err("activity estimate batches are empty");
    }
    let steps = (samples * d.time_steps) as f64;
    let layer: Vec<f64> = layer_spikes
        .iter()
        .zip(&d.widths)
        .map(|(&s, &w)| s as f64 / (steps * w as f64))
        .collect();
    let in_rate = input_spikes as f64 / (steps * d.input_dim as f64);
    let source_rate = |k: usize| if k == 0 { in_rate } else { layer[k - 1] };
    let input = (0..d.depth)
        .map(|l| {
            let active: f64 = d
                .sources(l)
                .into_iter()
                .map(|k| source_rate(k) * d.source_width(k) as f64)
                .sum();
            active / d.fan_in(l) as f64
        })
        .collect();
    Ok(RhoEstimate { layer, input })
}
