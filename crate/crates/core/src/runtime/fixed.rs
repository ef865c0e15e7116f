//! Q3.12 fixed-point network representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::{ArchDescriptor, LifLayer, NetworkParams};

/// Fractional bits of weights, currents and membrane potentials.
pub const FRAC_BITS: u32 = 12;
pub const ONE_Q12: i32 = 1 << FRAC_BITS;
/// Fractional bits of the decay constant.
pub const BETA_BITS: u32 = 15;
const MAX_SCALE_EXP: u32 = 30;

/// Quantised synapses of one layer stored per pre-synaptic index
/// (compressed rows: `offsets[j]..offsets[j + 1]` index `posts`/`values`).
/// Stored value `q` represents `q * 2^scale_exp / 4096`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedWeights {
    pub width: usize,
    pub fan_in: usize,
    pub scale_exp: u32,
    pub offsets: Vec<u32>,
    pub posts: Vec<u32>,
    pub values: Vec<i16>,
}

impl FixedWeights {
    /// Stored `(post, value)` pairs of pre-synaptic index `j`.
    #[inline]
    pub fn row(&self, j: usize) -> (&[u32], &[i16]) {
        let r = self.offsets[j] as usize..self.offsets[j + 1] as usize;
        (&self.posts[r.clone()], &self.values[r])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Dense `width x fan_in` matrix, zeros where no synapse exists.
    pub fn to_dense(&self) -> Vec<i16> {
        let mut out = vec![0i16; self.width * self.fan_in];
        for j in 0..self.fan_in {
            let (posts, vals) = self.row(j);
            for (&p, &v) in posts.iter().zip(vals) {
                out[p as usize * self.fan_in + j] = v;
            }
        }
        out
    }

    pub fn dequantize(&self, q: i16) -> f64 {
        q as f64 * (1u64 << self.scale_exp) as f64 / ONE_Q12 as f64
    }

    /// Float matrix recovered from the stored values.
    pub fn dequantized_dense(&self) -> Vec<f64> {
        self.to_dense().into_iter().map(|q| self.dequantize(q)).collect()
    }
}

/// Smallest exponent `s >= 0` such that `max_abs / 2^s` rounds inside i16.
pub fn scale_exponent(max_abs: f64) -> u32 {
    let mut s = 0;
    while s < MAX_SCALE_EXP && (max_abs * ONE_Q12 as f64 / (1u64 << s) as f64).round_ties_even() > i16::MAX as f64 {
        s += 1;
    }
    s
}

fn quantize_value(w: f64, scale_exp: u32) -> i16 {
    let q = (w * ONE_Q12 as f64 / (1u64 << scale_exp) as f64).round_ties_even();
    q.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Quantises one layer's masked weights.
pub fn quantize_layer(layer: &LifLayer) -> Result<FixedWeights> {
    if layer.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("non-finite weight cannot be quantised".into()));
    }
    let max_abs = layer
        .weights
        .iter()
        .zip(&layer.mask)
        .filter(|(_, &m)| m != 0)
        .fold(0.0f64, |m, (w, _)| m.max(w.abs()));
    let scale_exp = scale_exponent(max_abs);
    let mut offsets = Vec::with_capacity(layer.fan_in + 1);
    let mut posts = Vec::with_capacity(layer.nnz());
    let mut values = Vec::with_capacity(layer.nnz());
    offsets.push(0);
    for j in 0..layer.fan_in {
        for i in 0..layer.width {
            let k = i * layer.fan_in + j;
            if layer.mask[k] != 0 {
                posts.push(i as u32);
                values.push(quantize_value(layer.weights[k], scale_exp));
            }
        }
        offsets.push(posts.len() as u32);
    }
    Ok(FixedWeights {
        width: layer.width,
        fan_in: layer.fan_in,
        scale_exp,
        offsets,
        posts,
        values,
    })
}

/// One quantised LIF layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedLayer {
    pub weights: FixedWeights,
    /// Decay in Q0.15.
    pub beta_q: i32,
    /// Threshold in Q3.12.
    pub theta_q: i32,
    pub residual: bool,
    /// Folded normalisation `(a, b)` per `[t][i]`, both Q.12.
    pub bn: Option<Vec<(i32, i32)>>,
}

impl FixedLayer {
    pub fn width(&self) -> usize {
        self.weights.width
    }

    pub fn fan_in(&self) -> usize {
        self.weights.fan_in
    }
}

/// Quantised network: hidden layers followed by the readout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedNetwork {
    pub descriptor: ArchDescriptor,
    pub layers: Vec<FixedLayer>,
}

impl FixedNetwork {
    pub fn depth(&self) -> usize {
        self.descriptor.depth
    }

    pub fn readout(&self) -> &FixedLayer {
        &self.layers[self.descriptor.depth]
    }
}

fn to_q(x: f64, bits: u32) -> i32 {
    (x * (1u64 << bits) as f64)
        .round_ties_even()
        .clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

/// Quantises a trained network. Scale exponents are chosen per layer so
/// no weight saturates.
pub fn quantize_weights(net: &NetworkParams) -> Result<FixedNetwork> {
    let t_steps = net.descriptor.time_steps;
    let layers = net
        .layers()
        .map(|layer| {
            let weights = quantize_layer(layer)?;
            let bn = layer.bntt.as_ref().map(|bn| {
                (0..t_steps)
                    .flat_map(|t| (0..layer.width).map(move |i| (t, i)))
                    .map(|(t, i)| {
                        let (a, b) = bn.eval_affine(t, i);
                        (to_q(a, FRAC_BITS), to_q(b, FRAC_BITS))
                    })
                    .collect()
            });
            Ok(FixedLayer {
                weights,
                beta_q: to_q(layer.beta, BETA_BITS).clamp(0, (1 << BETA_BITS) - 1),
                theta_q: to_q(layer.theta, FRAC_BITS),
                residual: layer.residual,
                bn,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedNetwork {
        descriptor: net.descriptor.clone(),
        layers,
    })
}

#[inline]
fn sat_i16(x: i64) -> i16 {
    x.clamp(i16::MIN as i64, i16::MAX as i64) as i16
}

#[inline]
pub(crate) fn sat_i32(x: i64) -> i32 {
    x.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// Converts a raw accumulator to a Q3.12 current.
#[inline]
pub fn scale_current(acc: i32, scale_exp: u32) -> i32 {
    sat_i32((acc as i64) << scale_exp)
}

/// Folded normalisation in Q.12.
#[inline]
pub fn bn_fixed(current: i32, a: i32, b: i32) -> i32 {
    let prod = (current as i64 * a as i64 + (1 << (FRAC_BITS - 1))) >> FRAC_BITS;
    sat_i32(prod + b as i64)
}

/// Fixed-point LIF update shared by every inference path:
/// `u' = round(beta * (u - theta * s_prev)) + current`, saturated to Q3.12,
/// spike iff `u' >= theta`.
#[inline]
pub fn neuron_update(u: i16, s_prev: bool, current: i32, beta_q: i32, theta_q: i32) -> (i16, bool) {
    let reset = if s_prev { theta_q as i64 } else { 0 };
    let leak = ((u as i64 - reset) * beta_q as i64 + (1 << (BETA_BITS - 1))) >> BETA_BITS;
    let next = sat_i16(leak + current as i64);
    (next, next as i32 >= theta_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{build_network, Connectivity, DecayMode, SkipPattern};

    #[test]
    fn quantisation_examples() {
        assert_eq!(quantize_value(0.0, 0), 0);
        assert_eq!(quantize_value(1.0, 0), 4096);
        assert_eq!(quantize_value(-1.0, 0), -4096);
        // ties to even
        assert_eq!(quantize_value(0.5 / 4096.0, 0), 0);
        assert_eq!(quantize_value(1.5 / 4096.0, 0), 2);
        assert_eq!(scale_exponent(7.9), 0);
        assert_eq!(scale_exponent(8.0), 1);
        assert_eq!(scale_exponent(20.0), 2);
    }

    #[test]
    fn round_trip_error_bound_on_grid() {
        let bound = 2f64.powi(-13);
        let mut w = -8.0;
        while w < 8.0 {
            let q = quantize_value(w, 0);
            let back = q as f64 / 4096.0;
            assert!((back - w).abs() <= bound + 1e-15 || w > 32767.0 / 4096.0, "{w}");
            w += 1e-3;
        }
    }

    #[test]
    fn compact_rows_cover_mask() {
        let d = ArchDescriptor::uniform(2, 16, 4, DecayMode::Fixed, Connectivity::Sparse25, SkipPattern::None, 10, 3);
        let net = build_network(&d, 2).unwrap();
        let fixed = quantize_weights(&net).unwrap();
        for (fl, l) in fixed.layers.iter().zip(net.layers()) {
            assert_eq!(fl.weights.nnz(), l.nnz());
            let dq = fl.weights.dequantized_dense();
            let tol = 2f64.powi(-13) * (1u64 << fl.weights.scale_exp) as f64;
            for (a, b) in dq.iter().zip(&l.weights) {
                assert!((a - b).abs() <= tol + 1e-15);
            }
            assert_eq!(fl.theta_q, 4096);
        }
    }

    #[test]
    fn neuron_update_matches_hand_values() {
        let beta = 29491; // 0.9 in Q0.15
        let (u, s) = neuron_update(0, false, 3686, beta, 4096);
        assert_eq!((u, s), (3686, false));
        let (u, s) = neuron_update(u, s, 1024, beta, 4096);
        assert!(s);
        assert_eq!(u as i32, ((3686i64 * beta as i64 + 16384) >> 15) as i32 + 1024);
        let (u2, _) = neuron_update(i16::MAX, false, i32::MAX, beta, 4096);
        assert_eq!(u2, i16::MAX);
    }
}
