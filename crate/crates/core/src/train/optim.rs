//! AdamW over a flattened parameter vector.
//!
//! Decay constants are optimised through a sigmoid logit so they stay in
//! (0, 1). Weight decay is decoupled and only touches synaptic weights.

use super::bptt::Gradients;
use crate::error::{shape_err, Result};
use crate::snn::{DecayMode, NetworkParams};

const BETA_CLAMP: f64 = 1e-6;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(BETA_CLAMP, 1.0 - BETA_CLAMP);
    (p / (1.0 - p)).ln()
}

/// Flat view of the trainable parameters: values and per-entry decay flag.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatParams {
    pub values: Vec<f64>,
    pub decay: Vec<bool>,
}

/// Number of trainable decay scalars for a network.
fn beta_slots(net: &NetworkParams) -> usize {
    match net.descriptor.decay_mode {
        DecayMode::Fixed => 0,
        DecayMode::LearnableShared => 1,
        DecayMode::LearnablePerLayer => net.num_layers(),
    }
}

/// Packs weights, normalisation affines and decay logits.
pub fn flatten_params(net: &NetworkParams) -> FlatParams {
    let mut values = Vec::new();
    let mut decay = Vec::new();
    for layer in net.layers() {
        values.extend_from_slice(&layer.weights);
        decay.extend(std::iter::repeat_n(true, layer.weights.len()));
        if let Some(bn) = &layer.bntt {
            values.extend_from_slice(&bn.scale);
            values.extend_from_slice(&bn.shift);
            decay.extend(std::iter::repeat_n(false, 2 * bn.scale.len()));
        }
    }
    match beta_slots(net) {
        0 => {}
        1 => values.push(logit(net.layer(0).beta)),
        _ => values.extend(net.layers().map(|l| logit(l.beta))),
    }
    decay.resize(values.len(), false);
    FlatParams { values, decay }
}

/// Writes a flat vector back into the network. Masked weights stay zero
/// and normalisation scales are clamped.
pub fn unflatten_params(net: &mut NetworkParams, values: &[f64]) -> Result<()> {
    if values.len() != flatten_params(net).values.len() {
        return shape_err("parameter vector length does not match network");
    }
    let slots = beta_slots(net);
    let mut pos = 0;
    for layer in net.layers_mut() {
        let n = layer.weights.len();
        layer.weights.copy_from_slice(&values[pos..pos + n]);
        layer.apply_mask();
        pos += n;
        if let Some(bn) = &mut layer.bntt {
            let m = bn.scale.len();
            bn.scale.copy_from_slice(&values[pos..pos + m]);
            bn.shift.copy_from_slice(&values[pos + m..pos + 2 * m]);
            bn.clamp_scale();
            pos += 2 * m;
        }
    }
    match slots {
        0 => {}
        1 => {
            let b = sigmoid(values[pos]);
            net.layers_mut().for_each(|l| l.beta = b);
        }
        _ => {
            for (l, v) in net.layers_mut().zip(&values[pos..]) {
                l.beta = sigmoid(*v);
            }
        }
    }
    Ok(())
}

/// Gradient with respect to the flat parameters (chain rule through the
/// logit for decay constants; a shared decay sums its layer gradients).
pub fn flatten_grads(net: &NetworkParams, grads: &Gradients) -> Result<Vec<f64>> {
    if grads.layers.len() != net.num_layers() {
        return shape_err("gradient layer count does not match network");
    }
    let mut out = Vec::new();
    for (layer, g) in net.layers().zip(&grads.layers) {
        if g.weights.len() != layer.weights.len() {
            return shape_err("weight gradient shape mismatch");
        }
        out.extend_from_slice(&g.weights);
        if layer.bntt.is_some() {
            out.extend_from_slice(&g.bn_scale);
            out.extend_from_slice(&g.bn_shift);
        }
    }
    let dlogit = |beta: f64, g: f64| g * beta * (1.0 - beta);
    match beta_slots(net) {
        0 => {}
        1 => out.push(
            net.layers()
                .zip(&grads.layers)
                .map(|(l, g)| dlogit(l.beta, g.beta))
                .sum(),
        ),
        _ => out.extend(net.layers().zip(&grads.layers).map(|(l, g)| dlogit(l.beta, g.beta))),
    }
    Ok(out)
}

/// Adam moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update in place.
    pub fn step(&mut self, params: &mut FlatParams, grad: &[f64], lr: f64, weight_decay: f64) -> Result<()> {
        if grad.len() != self.m.len() || params.values.len() != self.m.len() {
            return shape_err("optimizer state length mismatch");
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, &g) in grad.iter().enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let p = &mut params.values[i];
            if params.decay[i] {
                *p -= lr * weight_decay * *p;
            }
            *p -= lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Flattens, updates and writes back a network.
    pub fn step_network(
        &mut self,
        net: &mut NetworkParams,
        grads: &Gradients,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        let mut flat = flatten_params(net);
        let g = flatten_grads(net, grads)?;
        self.step(&mut flat, &g, lr, weight_decay)?;
        unflatten_params(net, &flat.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{build_network, ArchDescriptor, Connectivity, SkipPattern};

    fn net(mode: DecayMode) -> NetworkParams {
        let d = ArchDescriptor::uniform(2, 6, 8, mode, Connectivity::Sparse50, SkipPattern::None, 5, 3);
        let mut n = build_network(&d, 3).unwrap();
        n.enable_bntt();
        n
    }

    #[test]
    fn flatten_roundtrip() {
        for mode in DecayMode::ALL {
            let mut n = net(mode);
            let before = n.clone();
            let flat = flatten_params(&n);
            unflatten_params(&mut n, &flat.values).unwrap();
            for (a, b) in n.layers().zip(before.layers()) {
                assert_eq!(a.weights, b.weights);
                assert!((a.beta - b.beta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shared_beta_stays_shared() {
        let mut n = net(DecayMode::LearnableShared);
        let mut flat = flatten_params(&n);
        *flat.values.last_mut().unwrap() = 0.0;
        unflatten_params(&mut n, &flat.values).unwrap();
        assert!(n.layers().all(|l| (l.beta - 0.5).abs() < 1e-12));
    }

    #[test]
    fn decoupled_decay_only_on_weights() {
        let mut p = FlatParams {
            values: vec![1.0, 1.0],
            decay: vec![true, false],
        };
        let mut opt = AdamW::new(2, 0.9, 0.999, 1e-8);
        opt.step(&mut p, &[0.0, 0.0], 0.1, 0.5).unwrap();
        assert!((p.values[0] - 0.95).abs() < 1e-12);
        assert_eq!(p.values[1], 1.0);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = FlatParams {
            values: vec![0.0],
            decay: vec![false],
        };
        let mut opt = AdamW::new(1, 0.9, 0.999, 1e-12);
        opt.step(&mut p, &[3.0], 0.01, 0.0).unwrap();
        assert!((p.values[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn masked_weights_stay_zero() {
        let mut n = net(DecayMode::Fixed);
        let mut flat = flatten_params(&n);
        flat.values.iter_mut().for_each(|v| *v = 0.3);
        unflatten_params(&mut n, &flat.values).unwrap();
        for l in n.layers() {
            for (w, m) in l.weights.iter().zip(&l.mask) {
                assert_eq!(*w == 0.0, *m == 0);
            }
        }
    }
}
