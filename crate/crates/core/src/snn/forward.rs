use super::lif::lif_neuron;
use super::network::NetworkParams;
use super::raster::SpikeRaster;
use crate::error::{shape_err, Result};

/// Result of a dense float forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// Readout spike count per class.
    pub counts: Vec<u32>,
    /// One raster per hidden layer.
    pub hidden: Vec<SpikeRaster>,
    /// Readout raster.
    pub output: SpikeRaster,
    /// Mean firing rate per hidden layer.
    pub rates: Vec<f64>,
}

impl ForwardOutput {
    /// Predicted class; the lowest index wins ties.
    pub fn prediction(&self) -> usize {
        argmax_lowest(&self.counts)
    }
}

/// Index of the maximum, lowest index on ties.
pub fn argmax_lowest(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Per-layer and network-wide firing rates.
#[derive(Clone, Debug, PartialEq)]
pub struct RateStats {
    pub per_layer: Vec<f64>,
    /// Mean of the per-layer rates weighted by layer width.
    pub network: f64,
}

pub fn firing_rate_stats(rasters: &[SpikeRaster]) -> Result<RateStats> {
    if rasters.is_empty() {
        return shape_err("firing_rate_stats needs at least one raster");
    }
    let per_layer: Vec<f64> = rasters.iter().map(SpikeRaster::rate).collect();
    let total_width: usize = rasters.iter().map(SpikeRaster::neurons).sum();
    let network = if total_width == 0 {
        0.0
    } else {
        rasters
            .iter()
            .zip(&per_layer)
            .map(|(r, rho)| rho * r.neurons() as f64)
            .sum::<f64>()
            / total_width as f64
    };
    Ok(RateStats { per_layer, network })
}

/// Dense float reference pass from zero state.
pub fn forward_dense(net: &NetworkParams, raster: &SpikeRaster) -> Result<ForwardOutput> {
    forward_dense_masked(net, raster, None)
}

/// Dense pass where hidden units with `active[l][i] == false` never spike.
pub fn forward_dense_masked(
    net: &NetworkParams,
    raster: &SpikeRaster,
    active: Option<&[Vec<bool>]>,
) -> Result<ForwardOutput> {
    let d = &net.descriptor;
    if raster.neurons() != d.input_dim || raster.time_steps() != d.time_steps {
        return shape_err(format!(
            "raster is {}x{}, network expects {}x{}",
            raster.time_steps(),
            raster.neurons(),
            d.time_steps,
            d.input_dim
        ));
    }
    if let Some(a) = active {
        if a.len() != net.hidden.len() || a.iter().zip(&net.hidden).any(|(m, l)| m.len() != l.width) {
            return shape_err("unit mask does not match hidden layer widths");
        }
    }
    let t_steps = d.time_steps;
    let mut hidden: Vec<SpikeRaster> = net
        .hidden
        .iter()
        .map(|l| SpikeRaster::zeros(t_steps, l.width))
        .collect();
    let mut output = SpikeRaster::zeros(t_steps, net.readout.width);
    let mut u: Vec<Vec<f64>> = net.layers().map(|l| vec![0.0; l.width]).collect();
    let mut s_prev: Vec<Vec<u8>> = net.layers().map(|l| vec![0u8; l.width]).collect();
    let mut fan_in = Vec::new();
    let mut current = Vec::new();

    for t in 0..t_steps {
        for (l, layer) in net.hidden.iter().enumerate() {
            fan_in.clear();
            for k in d.sources(l) {
                let frame = if k == 0 { raster.frame(t) } else { hidden[k - 1].frame(t) };
                fan_in.extend(frame.iter().map(|&s| s as f64));
            }
            current.resize(layer.width, 0.0);
            layer.synaptic_current(&fan_in, &mut current);
            if layer.residual {
                for (c, &s) in current.iter_mut().zip(hidden[l - 1].frame(t)) {
                    *c += s as f64;
                }
            }
            if let Some(bn) = &layer.bntt {
                bn.apply_eval(t, &mut current);
            }
            for i in 0..layer.width {
                let (next, spike) = lif_neuron(u[l][i], s_prev[l][i], current[i], layer.beta, layer.theta);
                let spike = spike && active.is_none_or(|a| a[l][i]);
                u[l][i] = next;
                s_prev[l][i] = spike as u8;
                hidden[l].set(t, i, spike);
            }
        }
        let ro = &net.readout;
        let last = net.hidden.len();
        fan_in.clear();
        fan_in.extend(hidden[last - 1].frame(t).iter().map(|&s| s as f64));
        current.resize(ro.width, 0.0);
        ro.synaptic_current(&fan_in, &mut current);
        for i in 0..ro.width {
            let (next, spike) = lif_neuron(u[last][i], s_prev[last][i], current[i], ro.beta, ro.theta);
            u[last][i] = next;
            s_prev[last][i] = spike as u8;
            output.set(t, i, spike);
        }
    }

    let counts = (0..net.readout.width)
        .map(|c| (0..t_steps).map(|t| output.get(t, c) as u32).sum())
        .collect();
    let rates = hidden.iter().map(SpikeRaster::rate).collect();
    Ok(ForwardOutput {
        counts,
        hidden,
        output,
        rates,
    })
}
