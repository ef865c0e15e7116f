#![allow(dead_code)]

use edgespike::snn::{build_network, ArchDescriptor, Connectivity, DecayMode, SkipPattern};
use edgespike::train::{batch_pass, BpttOptions, NormMode, SpikeFn, TrainConfig};
use edgespike::{NetworkParams, SpikeRaster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BN_EPS: f64 = 1e-5;

fn relaxed(x: f64, k: f64) -> f64 {
    0.5 + x / (1.0 + k * x.abs())
}

/// Independent time-major forward of the smooth-spike network with
/// running-statistics normalisation; returns the batch-mean loss
/// (cross-entropy plus activity term).
pub fn relaxed_loss(net: &NetworkParams, batch: &[(SpikeRaster, usize)], lambda_r: f64, k: f64) -> f64 {
    let d = &net.descriptor;
    let t_steps = d.time_steps;
    let mut total = 0.0;
    for (raster, label) in batch {
        let n_layers = d.depth + 1;
        let widths: Vec<usize> = (0..n_layers)
            .map(|l| if l < d.depth { d.widths[l] } else { d.num_classes })
            .collect();
        let mut u = widths.iter().map(|&w| vec![0.0; w]).collect::<Vec<_>>();
        let mut s = widths.iter().map(|&w| vec![0.0; w]).collect::<Vec<_>>();
        let mut rate_sum = vec![0.0; d.depth];
        let mut counts = vec![0.0; d.num_classes];
        for t in 0..t_steps {
            let input: Vec<f64> = raster.frame(t).iter().map(|&b| b as f64).collect();
            let mut outs: Vec<Vec<f64>> = Vec::new();
            for l in 0..n_layers {
                let layer = if l < d.depth { &net.hidden[l] } else { &net.readout };
                let mut x = Vec::new();
                if l == d.depth {
                    x.extend_from_slice(&outs[l - 1]);
                } else if d.skip == SkipPattern::DenseConnect {
                    x.extend_from_slice(&input);
                    for o in &outs {
                        x.extend_from_slice(o);
                    }
                } else if l == 0 {
                    x.extend_from_slice(&input);
                } else {
                    x.extend_from_slice(&outs[l - 1]);
                }
                assert_eq!(x.len(), layer.fan_in);
                let w = widths[l];
                let mut c = vec![0.0; w];
                for (i, ci) in c.iter_mut().enumerate() {
                    for (j, xj) in x.iter().enumerate() {
                        *ci += layer.weights[i * layer.fan_in + j] * xj;
                    }
                }
                if l < d.depth && d.skip == SkipPattern::Residual && l > 0 && d.widths[l] == d.widths[l - 1] {
                    for (ci, p) in c.iter_mut().zip(&outs[l - 1]) {
                        *ci += p;
                    }
                }
                if let Some(bn) = &layer.bntt {
                    for (i, ci) in c.iter_mut().enumerate() {
                        let q = t * w + i;
                        *ci = bn.scale[q] * (*ci - bn.running_mean[q]) / (bn.running_var[q] + BN_EPS).sqrt()
                            + bn.shift[q];
                    }
                }
                let mut out = vec![0.0; w];
                for i in 0..w {
                    let un = layer.beta * (u[l][i] - layer.theta * s[l][i]) + c[i];
                    out[i] = relaxed(un - layer.theta, k);
                    u[l][i] = un;
                    s[l][i] = out[i];
                }
                if l < d.depth {
                    rate_sum[l] += out.iter().sum::<f64>();
                } else {
                    for (c, o) in counts.iter_mut().zip(&out) {
                        *c += o;
                    }
                }
                outs.push(out);
            }
        }
        let m = counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + counts.iter().map(|c| (c - m).exp()).sum::<f64>().ln();
        let ce = lse - counts[*label];
        let act: f64 = (0..d.depth)
            .map(|l| rate_sum[l] / (t_steps * d.widths[l]) as f64)
            .sum();
        total += ce + lambda_r * act;
    }
    total / batch.len() as f64
}

/// A parameter coordinate of the network.
#[derive(Clone, Copy, Debug)]
pub enum Coord {
    Weight { layer: usize, idx: usize },
    Beta { layer: usize },
    BnScale { layer: usize, idx: usize },
    BnShift { layer: usize, idx: usize },
}

fn layer_mut(net: &mut NetworkParams, l: usize) -> &mut edgespike::LifLayer {
    if l < net.hidden.len() {
        &mut net.hidden[l]
    } else {
        &mut net.readout
    }
}

fn param_mut(net: &mut NetworkParams, c: Coord) -> &mut f64 {
    match c {
        Coord::Weight { layer, idx } => &mut layer_mut(net, layer).weights[idx],
        Coord::Beta { layer } => &mut layer_mut(net, layer).beta,
        Coord::BnScale { layer, idx } => &mut layer_mut(net, layer).bntt.as_mut().unwrap().scale[idx],
        Coord::BnShift { layer, idx } => &mut layer_mut(net, layer).bntt.as_mut().unwrap().shift[idx],
    }
}

/// Random tiny network with perturbed decay constants, randomised
/// normalisation (when requested) and boosted weights.
pub fn random_tiny_net(
    rng: &mut ChaCha8Rng,
    decay: DecayMode,
    skip: SkipPattern,
    bntt: bool,
) -> NetworkParams {
    let width = rng.random_range(2..=8);
    let t = rng.random_range(2..=4);
    let input = rng.random_range(3..=6);
    let classes = rng.random_range(2..=3);
    let conn = [Connectivity::Dense, Connectivity::Sparse50][rng.random_range(0..2)];
    let desc = ArchDescriptor::uniform(2, width, t, decay, conn, skip, input, classes);
    let mut net = build_network(&desc, rng.random()).unwrap();
    if bntt {
        net.enable_bntt();
    }
    for layer in net.hidden.iter_mut().chain(std::iter::once(&mut net.readout)) {
        layer.beta = rng.random_range(0.5..0.95);
        for (w, &m) in layer.weights.iter_mut().zip(&layer.mask) {
            if m != 0 {
                *w *= 1.5;
            }
        }
        if let Some(bn) = &mut layer.bntt {
            for v in bn.scale.iter_mut() {
                *v = rng.random_range(0.5..1.5);
            }
            for v in bn.shift.iter_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
            for v in bn.running_mean.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
            for v in bn.running_var.iter_mut() {
                *v = rng.random_range(0.5..2.0);
            }
        }
    }
    net
}

pub fn random_batch(rng: &mut ChaCha8Rng, net: &NetworkParams, n: usize) -> Vec<(SpikeRaster, usize)> {
    let d = &net.descriptor;
    (0..n)
        .map(|_| {
            let data = (0..d.time_steps * d.input_dim)
                .map(|_| rng.random_bool(0.5) as u8)
                .collect();
            (
                SpikeRaster::from_vec(d.time_steps, d.input_dim, data).unwrap(),
                rng.random_range(0..d.num_classes),
            )
        })
        .collect()
}

/// Outcome of one gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub coords: usize,
    pub max_rel_err: f64,
}

pub const FD_STEP: f64 = 1e-5;
/// Absolute floor below which both gradients count as zero.
pub const FD_FLOOR: f64 = 1e-8;

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < FD_FLOOR {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares analytic gradients with central differences on up to
/// `max_coords` coordinates (all coordinates when there are fewer).
pub fn grad_check(
    net: &NetworkParams,
    batch: &[(SpikeRaster, usize)],
    lambda_r: f64,
    k: f64,
    max_coords: usize,
    rng: &mut ChaCha8Rng,
) -> GradCheck {
    let cfg = TrainConfig {
        lambda_r,
        lambda_w: 0.0,
        ..TrainConfig::default()
    };
    let refs: Vec<(&SpikeRaster, usize)> = batch.iter().map(|(r, y)| (r, *y)).collect();
    let opts = BpttOptions {
        spike_fn: SpikeFn::Relaxed,
        norm: NormMode::Running,
        k,
    };
    let pass = batch_pass(net, &refs, &cfg, opts).unwrap();

    let mut coords = Vec::new();
    let n_layers = net.hidden.len() + 1;
    for l in 0..n_layers {
        let layer = if l < net.hidden.len() { &net.hidden[l] } else { &net.readout };
        for (idx, &m) in layer.mask.iter().enumerate() {
            if m != 0 {
                coords.push(Coord::Weight { layer: l, idx });
            }
        }
        if net.descriptor.decay_mode.is_learnable() {
            coords.push(Coord::Beta { layer: l });
        }
        if let Some(bn) = &layer.bntt {
            for idx in 0..bn.scale.len() {
                coords.push(Coord::BnScale { layer: l, idx });
                coords.push(Coord::BnShift { layer: l, idx });
            }
        }
    }
    // keep all non-weight coordinates, subsample weights if needed
    while coords.len() > max_coords {
        let weights: Vec<usize> = coords
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, Coord::Weight { .. }))
            .map(|(i, _)| i)
            .collect();
        if weights.is_empty() {
            break;
        }
        coords.remove(weights[rng.random_range(0..weights.len())]);
    }

    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for &c in &coords {
        let analytic = match c {
            Coord::Weight { layer, idx } => pass.grads.layers[layer].weights[idx],
            Coord::Beta { layer } => pass.grads.layers[layer].beta,
            Coord::BnScale { layer, idx } => pass.grads.layers[layer].bn_scale[idx],
            Coord::BnShift { layer, idx } => pass.grads.layers[layer].bn_shift[idx],
        };
        let orig = *param_mut(&mut probe, c);
        *param_mut(&mut probe, c) = orig + FD_STEP;
        let up = relaxed_loss(&probe, batch, lambda_r, k);
        *param_mut(&mut probe, c) = orig - FD_STEP;
        let down = relaxed_loss(&probe, batch, lambda_r, k);
        *param_mut(&mut probe, c) = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic, numeric));
    }
    GradCheck {
        coords: coords.len(),
        max_rel_err: worst,
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
