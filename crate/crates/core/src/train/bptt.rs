//! Surrogate-gradient backpropagation through time.
//!
//! The forward pass is run layer by layer over a whole batch (so
//! per-time-step batch statistics are available), then each sample is
//! back-propagated independently. Every Heaviside derivative, including
//! the one on the soft-reset path, is replaced by the fast-sigmoid
//! surrogate.

use super::bntt::{StepStats, BNTT_EPS};
use super::loss::{softmax_ce, LossBreakdown};
use super::schedule::{curriculum_k, surrogate, TrainConfig};
use crate::error::{shape_err, validation_err, Error, Result};
use crate::snn::{NetworkParams, SpikeRaster};

/// Spike nonlinearity used in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpikeFn {
    /// Binary spikes (training and inference).
    Heaviside,
    /// Smooth spikes `0.5 + x / (1 + k|x|)`, whose derivative is exactly
    /// the surrogate. Used to check gradients against finite differences.
    Relaxed,
}

impl SpikeFn {
    #[inline]
    pub fn eval(self, x: f64, k: f64) -> f64 {
        match self {
            SpikeFn::Heaviside => (x >= 0.0) as u8 as f64,
            SpikeFn::Relaxed => 0.5 + x / (1.0 + k * x.abs()),
        }
    }
}

/// Source of BNTT statistics in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Current batch statistics (treated as constants by the backward pass).
    Batch,
    /// Running statistics, an exact per-step affine map.
    Running,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpttOptions {
    pub spike_fn: SpikeFn,
    pub norm: NormMode,
    /// Surrogate sharpness.
    pub k: f64,
}

impl BpttOptions {
    pub fn training(k: f64) -> Self {
        Self {
            spike_fn: SpikeFn::Heaviside,
            norm: NormMode::Batch,
            k,
        }
    }
}

/// Gradient of one layer. `bn_scale`/`bn_shift` are empty when the layer
/// has no normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub beta: f64,
    pub bn_scale: Vec<f64>,
    pub bn_shift: Vec<f64>,
}

/// Gradients for hidden layers followed by the readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    fn zeros(net: &NetworkParams) -> Self {
        Self {
            layers: net
                .layers()
                .map(|l| {
                    let bn = l.bntt.as_ref().map_or(0, |b| b.scale.len());
                    LayerGrad {
                        weights: vec![0.0; l.weights.len()],
                        beta: 0.0,
                        bn_scale: vec![0.0; bn],
                        bn_shift: vec![0.0; bn],
                    }
                })
                .collect(),
        }
    }
}

/// Outcome of one forward/backward pass over a batch.
#[derive(Clone, Debug)]
pub struct BatchPass {
    pub grads: Gradients,
    /// Batch-mean loss (the l2 term is reported, not differentiated).
    pub loss: LossBreakdown,
    /// Per hidden layer with normalisation, per time step batch statistics.
    pub bn_stats: Vec<Option<Vec<StepStats>>>,
    /// Batch-mean firing rate of each hidden layer.
    pub rates: Vec<f64>,
}

struct LayerTrace {
    width: usize,
    /// `[b][t][i]`
    s: Vec<f64>,
    u: Vec<f64>,
    /// Normalised pre-affine current `[b][t][i]` (empty without BNTT).
    chat: Vec<f64>,
    /// d(normalised current)/d(raw current) per `[t][i]`.
    bn_factor: Vec<f64>,
}

struct Ctx<'a> {
    net: &'a NetworkParams,
    batch: &'a [(&'a SpikeRaster, usize)],
    t_steps: usize,
}

impl Ctx<'_> {
    /// Sources of layer `l` (hidden index, or `depth` for the readout).
    fn sources(&self, l: usize) -> Vec<usize> {
        let d = &self.net.descriptor;
        if l < d.depth {
            d.sources(l)
        } else {
            vec![d.depth]
        }
    }

    fn gather(&self, traces: &[LayerTrace], l: usize, b: usize, t: usize, x: &mut Vec<f64>) {
        x.clear();
        for k in self.sources(l) {
            if k == 0 {
                x.extend(self.batch[b].0.frame(t).iter().map(|&s| s as f64));
            } else {
                let tr = &traces[k - 1];
                let base = (b * self.t_steps + t) * tr.width;
                x.extend_from_slice(&tr.s[base..base + tr.width]);
            }
        }
    }
}

/// Forward and backward pass at the curriculum sharpness of `epoch`, with
/// binary spikes and batch statistics.
pub fn bptt_backward(
    net: &NetworkParams,
    batch: &[(&SpikeRaster, usize)],
    config: &TrainConfig,
    epoch: usize,
) -> Result<BatchPass> {
    batch_pass(net, batch, config, BpttOptions::training(curriculum_k(epoch, config)))
}

/// Forward and backward pass with explicit options.
pub fn batch_pass(
    net: &NetworkParams,
    batch: &[(&SpikeRaster, usize)],
    config: &TrainConfig,
    opts: BpttOptions,
) -> Result<BatchPass> {
    if batch.is_empty() {
        return validation_err("empty batch");
    }
    let d = &net.descriptor;
    for (r, y) in batch {
        if r.neurons() != d.input_dim || r.time_steps() != d.time_steps {
            return shape_err(format!(
                "batch raster {}x{} does not match network {}x{}",
                r.time_steps(),
                r.neurons(),
                d.time_steps,
                d.input_dim
            ));
        }
        if *y >= d.num_classes {
            return validation_err(format!("label {y} out of range"));
        }
    }
    if !(opts.k > 0.0) {
        return validation_err("surrogate sharpness must be positive");
    }
    let ctx = Ctx {
        net,
        batch,
        t_steps: d.time_steps,
    };
    let (traces, bn_stats) = forward(&ctx, opts)?;
    backward(&ctx, &traces, bn_stats, config, opts)
}

/// Per-layer traces and, for normalised layers, per-step batch statistics.
type ForwardState = (Vec<LayerTrace>, Vec<Option<Vec<StepStats>>>);

fn forward(ctx: &Ctx<'_>, opts: BpttOptions) -> Result<ForwardState> {
    let net = ctx.net;
    let bsz = ctx.batch.len();
    let t_steps = ctx.t_steps;
    let mut traces: Vec<LayerTrace> = Vec::with_capacity(net.num_layers());
    let mut bn_stats = Vec::new();
    let mut x = Vec::new();

    for (l, layer) in net.layers().enumerate() {
        let n = layer.width;
        let mut cur = vec![0.0; bsz * t_steps * n];
        for b in 0..bsz {
            for t in 0..t_steps {
                ctx.gather(&traces, l, b, t, &mut x);
                let out = &mut cur[(b * t_steps + t) * n..(b * t_steps + t + 1) * n];
                for (j, &xj) in x.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += layer.weights[i * layer.fan_in + j] * xj;
                    }
                }
                if layer.residual {
                    let prev = &traces[l - 1];
                    let base = (b * t_steps + t) * prev.width;
                    for (o, s) in out.iter_mut().zip(&prev.s[base..base + n]) {
                        *o += s;
                    }
                }
            }
        }

        let mut chat = Vec::new();
        let mut bn_factor = Vec::new();
        if let Some(bn) = &layer.bntt {
            chat = vec![0.0; cur.len()];
            bn_factor = vec![0.0; t_steps * n];
            let mut per_step = Vec::with_capacity(t_steps);
            let mut block = vec![0.0; bsz * n];
            for t in 0..t_steps {
                for b in 0..bsz {
                    let src = (b * t_steps + t) * n;
                    block[b * n..(b + 1) * n].copy_from_slice(&cur[src..src + n]);
                }
                let (mean, var) = match opts.norm {
                    NormMode::Batch => {
                        let st = bn.batch_stats(&block);
                        let mv = (st.mean.clone(), st.var.clone());
                        per_step.push(st);
                        mv
                    }
                    NormMode::Running => (
                        bn.running_mean[t * n..(t + 1) * n].to_vec(),
                        bn.running_var[t * n..(t + 1) * n].to_vec(),
                    ),
                };
                for i in 0..n {
                    let inv = 1.0 / (var[i] + BNTT_EPS).sqrt();
                    let scale = bn.scale[t * n + i];
                    let shift = bn.shift[t * n + i];
                    bn_factor[t * n + i] = scale * inv;
                    for b in 0..bsz {
                        let k = (b * t_steps + t) * n + i;
                        let xhat = (cur[k] - mean[i]) * inv;
                        chat[k] = xhat;
                        cur[k] = scale * xhat + shift;
                    }
                }
            }
            if opts.norm == NormMode::Batch {
                bn_stats.push(Some(per_step));
            } else {
                bn_stats.push(None);
            }
        } else if l < net.hidden.len() {
            bn_stats.push(None);
        }

        let mut u = vec![0.0; cur.len()];
        let mut s = vec![0.0; cur.len()];
        for b in 0..bsz {
            for i in 0..n {
                let mut u_prev = 0.0;
                let mut s_prev = 0.0;
                for t in 0..t_steps {
                    let k = (b * t_steps + t) * n + i;
                    let ut = layer.beta * (u_prev - layer.theta * s_prev) + cur[k];
                    let st = opts.spike_fn.eval(ut - layer.theta, opts.k);
                    u[k] = ut;
                    s[k] = st;
                    u_prev = ut;
                    s_prev = st;
                }
            }
        }
        traces.push(LayerTrace {
            width: n,
            s,
            u,
            chat,
            bn_factor,
        });
    }
    Ok((traces, bn_stats))
}

fn backward(
    ctx: &Ctx<'_>,
    traces: &[LayerTrace],
    bn_stats: Vec<Option<Vec<StepStats>>>,
    config: &TrainConfig,
    opts: BpttOptions,
) -> Result<BatchPass> {
    let net = ctx.net;
    let bsz = ctx.batch.len();
    let t_steps = ctx.t_steps;
    let depth = net.hidden.len();
    let inv_b = 1.0 / bsz as f64;
    let mut grads = Gradients::zeros(net);
    let mut ce_sum = 0.0;
    let mut activity_sum = 0.0;
    let mut x = Vec::new();

    // offsets of each source inside a layer's fan-in vector
    let offsets: Vec<Vec<(usize, usize)>> = (0..=depth)
        .map(|l| {
            let mut off = 0;
            ctx.sources(l)
                .into_iter()
                .map(|k| {
                    let w = net.descriptor.source_width(k);
                    let item = (k, off);
                    off += w;
                    item
                })
                .collect()
        })
        .collect();

    for b in 0..bsz {
        let label = ctx.batch[b].1;
        // seeds dL/ds for every layer, [t][i]
        let mut seeds: Vec<Vec<f64>> = traces
            .iter()
            .map(|tr| vec![0.0; t_steps * tr.width])
            .collect();

        for (l, tr) in traces.iter().enumerate().take(depth) {
            let n = tr.width;
            let base = b * t_steps * n;
            let mean: f64 = tr.s[base..base + t_steps * n].iter().sum::<f64>() / (t_steps * n) as f64;
            activity_sum += config.lambda_r * mean;
            let g = config.lambda_r / (t_steps * n) as f64 * inv_b;
            seeds[l].iter_mut().for_each(|v| *v = g);
        }

        let out = &traces[depth];
        let c = out.width;
        let counts: Vec<f64> = (0..c)
            .map(|i| (0..t_steps).map(|t| out.s[(b * t_steps + t) * c + i]).sum())
            .collect();
        let (ce, probs) = softmax_ce(&counts, label);
        ce_sum += ce;
        for t in 0..t_steps {
            for i in 0..c {
                let target = (i == label) as u8 as f64;
                seeds[depth][t * c + i] = (probs[i] - target) * inv_b;
            }
        }

        for l in (0..=depth).rev() {
            let layer = net.layer(l);
            let tr = &traces[l];
            let n = tr.width;
            let beta = layer.beta;
            let theta = layer.theta;
            let mut du_next = vec![0.0; n];
            let mut dc = vec![0.0; n];
            let lg = &mut grads.layers[l];
            for t in (0..t_steps).rev() {
                let row = (b * t_steps + t) * n;
                for i in 0..n {
                    let u = tr.u[row + i];
                    let gs = seeds[l][t * n + i] - beta * theta * du_next[i];
                    let du = gs * surrogate(u - theta, opts.k) + beta * du_next[i];
                    if !du.is_finite() {
                        return Err(Error::Numeric(format!(
                            "non-finite gradient in layer {l} at step {t}"
                        )));
                    }
                    if t > 0 {
                        let prev = row - n + i;
                        lg.beta += du * (tr.u[prev] - theta * tr.s[prev]);
                    }
                    du_next[i] = du;
                    dc[i] = if layer.bntt.is_some() {
                        let k = t * n + i;
                        lg.bn_scale[k] += du * tr.chat[row + i];
                        lg.bn_shift[k] += du;
                        du * tr.bn_factor[k]
                    } else {
                        du
                    };
                }

                ctx.gather(traces, l, b, t, &mut x);
                let fan_in = layer.fan_in;
                for (i, &dci) in dc.iter().enumerate() {
                    if dci == 0.0 {
                        continue;
                    }
                    let grow = &mut lg.weights[i * fan_in..(i + 1) * fan_in];
                    for (g, &xj) in grow.iter_mut().zip(&x) {
                        if xj != 0.0 {
                            *g += dci * xj;
                        }
                    }
                }
                for &(k, off) in &offsets[l] {
                    if k == 0 {
                        continue;
                    }
                    let src = k - 1;
                    let w = net.descriptor.source_width(k);
                    let (head, tail) = seeds.split_at_mut(l);
                    let _ = tail;
                    let target = &mut head[src][t * w..(t + 1) * w];
                    for (i, &dci) in dc.iter().enumerate() {
                        if dci == 0.0 {
                            continue;
                        }
                        let wrow = &layer.weights[i * fan_in + off..i * fan_in + off + w];
                        for (tg, wv) in target.iter_mut().zip(wrow) {
                            *tg += wv * dci;
                        }
                    }
                }
                if layer.residual {
                    let (head, _) = seeds.split_at_mut(l);
                    for (tg, d) in head[l - 1][t * n..(t + 1) * n].iter_mut().zip(&dc) {
                        *tg += d;
                    }
                }
            }
        }
    }

    for (lg, layer) in grads.layers.iter_mut().zip(net.layers()) {
        for (g, &m) in lg.weights.iter_mut().zip(&layer.mask) {
            if m == 0 {
                *g = 0.0;
            }
        }
    }

    let rates = traces[..depth]
        .iter()
        .map(|tr| tr.s.iter().sum::<f64>() / tr.s.len() as f64)
        .collect();
    let l2 = config.lambda_w * net.weight_sq_norm();
    Ok(BatchPass {
        grads,
        loss: LossBreakdown::from_parts(ce_sum * inv_b, activity_sum * inv_b, l2),
        bn_stats,
        rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{build_network, ArchDescriptor, Connectivity, DecayMode, SkipPattern};

    fn tiny(skip: SkipPattern) -> NetworkParams {
        let d = ArchDescriptor::uniform(2, 4, 3, DecayMode::LearnablePerLayer, Connectivity::Dense, skip, 3, 2);
        build_network(&d, 5).unwrap()
    }

    #[test]
    fn zero_input_zero_weights_gives_zero_gradients() {
        let mut net = tiny(SkipPattern::None);
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let r = SpikeRaster::zeros(3, 3);
        let batch = [(&r, 0usize), (&r, 1usize)];
        let pass = batch_pass(&net, &batch, &TrainConfig::default(), BpttOptions::training(1.0)).unwrap();
        for lg in &pass.grads.layers {
            assert!(lg.weights.iter().all(|&g| g == 0.0));
            assert_eq!(lg.beta, 0.0);
        }
        assert_eq!(pass.loss.l2, 0.0);
    }

    #[test]
    fn activity_gradient_is_linear_in_lambda() {
        let net = tiny(SkipPattern::Residual);
        let r = SpikeRaster::from_vec(3, 3, vec![1, 0, 1, 1, 1, 0, 0, 1, 1]).unwrap();
        let batch = [(&r, 1usize)];
        let opts = BpttOptions {
            spike_fn: SpikeFn::Relaxed,
            norm: NormMode::Running,
            k: 2.0,
        };
        let grad = |lr: f64| {
            let cfg = TrainConfig {
                lambda_r: lr,
                ..TrainConfig::default()
            };
            batch_pass(&net, &batch, &cfg, opts).unwrap().grads
        };
        let g0 = grad(0.0);
        let g1 = grad(0.5);
        let g2 = grad(1.0);
        for ((a, b), c) in g0.layers.iter().zip(&g1.layers).zip(&g2.layers) {
            for ((w0, w1), w2) in a.weights.iter().zip(&b.weights).zip(&c.weights) {
                let one = w1 - w0;
                let two = w2 - w0;
                assert!((two - 2.0 * one).abs() <= 1e-12 + 1e-9 * two.abs());
            }
        }
    }

    #[test]
    fn rejects_bad_batches() {
        let net = tiny(SkipPattern::None);
        let wrong = SpikeRaster::zeros(3, 4);
        assert!(batch_pass(&net, &[(&wrong, 0)], &TrainConfig::default(), BpttOptions::training(1.0)).is_err());
        let r = SpikeRaster::zeros(3, 3);
        assert!(batch_pass(&net, &[(&r, 2)], &TrainConfig::default(), BpttOptions::training(1.0)).is_err());
        assert!(batch_pass(&net, &[], &TrainConfig::default(), BpttOptions::training(1.0)).is_err());
    }
}
