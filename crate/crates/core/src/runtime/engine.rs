//! Event-driven fixed-point inference and its dense reference.

use super::counter::OpCounter;
use super::fixed::{bn_fixed, neuron_update, sat_i32, scale_current, FixedNetwork, FixedWeights, ONE_Q12};
use crate::error::{shape_err, validation_err, Error, Result};
use crate::snn::{argmax_lowest, SpikeRaster};

/// Adds the stored row of every active pre-synaptic index into `acc`.
/// Returns the number of weight pairs touched, which is also added to
/// `counter.ac_count`. Overflow saturates and sets `counter.overflow`.
pub fn sparse_accumulate(
    weights: &FixedWeights,
    events: &[u32],
    acc: &mut [i32],
    counter: &mut OpCounter,
) -> Result<u64> {
    if acc.len() != weights.width {
        return shape_err(format!(
            "accumulator width {} does not match layer width {}",
            acc.len(),
            weights.width
        ));
    }
    let mut touched = 0u64;
    for &j in events {
        let j = j as usize;
        if j >= weights.fan_in {
            return validation_err(format!("event index {j} outside fan-in {}", weights.fan_in));
        }
        let (posts, vals) = weights.row(j);
        for (&p, &v) in posts.iter().zip(vals) {
            let a = &mut acc[p as usize];
            match a.checked_add(v as i32) {
                Some(s) => *a = s,
                None => {
                    *a = a.saturating_add(v as i32);
                    counter.overflow = true;
                }
            }
        }
        touched += posts.len() as u64;
    }
    counter.ac_count += touched;
    Ok(touched)
}

/// Result of one fixed-point inference.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceOutcome {
    pub prediction: usize,
    pub counts: Vec<u32>,
    pub hidden: Vec<SpikeRaster>,
    pub output: SpikeRaster,
    /// Output firing rate of each hidden layer.
    pub layer_rates: Vec<f64>,
    /// Active fraction of each layer's fan-in vector (hidden layers, then
    /// the readout).
    pub input_rates: Vec<f64>,
    pub counter: OpCounter,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Sparse,
    Dense,
}

/// Event-driven inference over compacted rows.
pub fn infer_sparse(net: &FixedNetwork, raster: &SpikeRaster) -> Result<InferenceOutcome> {
    run(net, raster, Kernel::Sparse)
}

/// Dense fixed-point reference: full matrix-vector products with the
/// same arithmetic. Its `ac_count` counts stored pairs whose input spiked.
pub fn infer_dense_fixed(net: &FixedNetwork, raster: &SpikeRaster) -> Result<InferenceOutcome> {
    run(net, raster, Kernel::Dense)
}

fn run(net: &FixedNetwork, raster: &SpikeRaster, kernel: Kernel) -> Result<InferenceOutcome> {
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
    let depth = d.depth;
    let n_layers = net.layers.len();
    let t_steps = d.time_steps;
    let dense: Vec<(Vec<i16>, Vec<bool>)> = match kernel {
        Kernel::Dense => net
            .layers
            .iter()
            .map(|l| {
                let w = &l.weights;
                let mut present = vec![false; w.width * w.fan_in];
                for j in 0..w.fan_in {
                    for &p in w.row(j).0 {
                        present[p as usize * w.fan_in + j] = true;
                    }
                }
                (w.to_dense(), present)
            })
            .collect(),
        Kernel::Sparse => Vec::new(),
    };

    let mut hidden: Vec<SpikeRaster> = d.widths.iter().map(|&w| SpikeRaster::zeros(t_steps, w)).collect();
    let mut output = SpikeRaster::zeros(t_steps, d.num_classes);
    let mut u: Vec<Vec<i16>> = net.layers.iter().map(|l| vec![0; l.width()]).collect();
    let mut s_prev: Vec<Vec<bool>> = net.layers.iter().map(|l| vec![false; l.width()]).collect();
    let mut counter = OpCounter::with_layers(n_layers);
    let mut active_in = vec![0u64; n_layers];
    let mut overflow_layer = None;
    let mut bits: Vec<u8> = Vec::new();
    let mut events: Vec<u32> = Vec::new();
    let mut acc: Vec<i32> = Vec::new();

    for t in 0..t_steps {
        for l in 0..n_layers {
            let layer = &net.layers[l];
            let width = layer.width();
            let sources = if l < depth { d.sources(l) } else { vec![depth] };
            bits.clear();
            for k in sources {
                let frame = if k == 0 { raster.frame(t) } else { hidden[k - 1].frame(t) };
                bits.extend_from_slice(frame);
            }
            let nnz = layer.weights.nnz() as u64;
            counter.dense_equivalent_macs += nnz;
            counter.layer_dense[l] += nnz;

            acc.clear();
            acc.resize(width, 0);
            let overflow_before = counter.overflow;
            match kernel {
                Kernel::Sparse => {
                    events.clear();
                    events.extend(bits.iter().enumerate().filter(|(_, &b)| b != 0).map(|(j, _)| j as u32));
                    active_in[l] += events.len() as u64;
                    let touched = sparse_accumulate(&layer.weights, &events, &mut acc, &mut counter)?;
                    counter.layer_ac[l] += touched;
                }
                Kernel::Dense => {
                    let (w, present) = &dense[l];
                    let fan_in = layer.fan_in();
                    active_in[l] += bits.iter().filter(|&&b| b != 0).count() as u64;
                    let mut touched = 0u64;
                    for (i, a) in acc.iter_mut().enumerate() {
                        let row = &w[i * fan_in..(i + 1) * fan_in];
                        let mut sum = 0i64;
                        for (j, (&wv, &x)) in row.iter().zip(&bits).enumerate() {
                            sum += wv as i64 * x as i64;
                            touched += (x != 0 && present[i * fan_in + j]) as u64;
                        }
                        *a = sat_i32(sum);
                        if sum != *a as i64 {
                            counter.overflow = true;
                        }
                    }
                    counter.ac_count += touched;
                    counter.layer_ac[l] += touched;
                }
            }
            if counter.overflow && !overflow_before && overflow_layer.is_none() {
                overflow_layer = Some(l);
            }

            let (done, rest) = hidden.split_at_mut(l.min(depth));
            let prev = done.last();
            for i in 0..width {
                let mut current = scale_current(acc[i], layer.weights.scale_exp);
                if layer.residual {
                    if let Some(p) = prev {
                        if p.get(t, i) != 0 {
                            current = sat_i32(current as i64 + ONE_Q12 as i64);
                            counter.skip_accumulates += 1;
                        }
                    }
                }
                if let Some(bn) = &layer.bn {
                    let (a, b) = bn[t * width + i];
                    current = bn_fixed(current, a, b);
                }
                let (next, spike) = neuron_update(u[l][i], s_prev[l][i], current, layer.beta_q, layer.theta_q);
                u[l][i] = next;
                s_prev[l][i] = spike;
                if l < depth {
                    rest[0].set(t, i, spike);
                } else {
                    output.set(t, i, spike);
                }
            }
            counter.neuron_updates += width as u64;
        }
    }

    if let Some(layer) = overflow_layer {
        return Err(Error::Overflow { layer });
    }
    let counts: Vec<u32> = (0..d.num_classes)
        .map(|i| (0..t_steps).map(|t| output.get(t, i) as u32).sum())
        .collect();
    let input_rates = net
        .layers
        .iter()
        .zip(&active_in)
        .map(|(l, &a)| a as f64 / (t_steps * l.fan_in()) as f64)
        .collect();
    Ok(InferenceOutcome {
        prediction: argmax_lowest(&counts),
        layer_rates: hidden.iter().map(SpikeRaster::rate).collect(),
        hidden,
        output,
        counts,
        input_rates,
        counter,
    })
}

/// Fraction of dense multiply-accumulates avoided at spike rate `rho`.
pub fn mac_reduction(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return validation_err(format!("rate {rho} outside [0, 1]"));
    }
    Ok(1.0 - rho)
}
