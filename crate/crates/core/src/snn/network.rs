use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{out_degree, ArchDescriptor, Connectivity};
use crate::error::Result;
use crate::rng;
use crate::train::bntt::BnttParams;

pub const INITIAL_BETA: f64 = 0.9;
pub const INITIAL_THETA: f64 = 1.0;

/// One LIF layer: masked weight matrix (`width` rows by `fan_in` columns,
/// row-major, rows are post-synaptic), decay, threshold, optional identity
/// skip and optional per-time-step normalisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifLayer {
    pub width: usize,
    pub fan_in: usize,
    pub weights: Vec<f64>,
    pub mask: Vec<u8>,
    pub beta: f64,
    pub theta: f64,
    pub residual: bool,
    pub bntt: Option<BnttParams>,
}

impl LifLayer {
    #[inline]
    pub fn weight(&self, post: usize, pre: usize) -> f64 {
        self.weights[post * self.fan_in + pre]
    }

    pub fn nnz(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }

    /// Zeroes every weight outside the mask.
    pub fn apply_mask(&mut self) {
        for (w, &m) in self.weights.iter_mut().zip(&self.mask) {
            if m == 0 {
                *w = 0.0;
            }
        }
    }

    /// Post-synaptic current for a (possibly real-valued) fan-in vector.
    pub fn synaptic_current(&self, input: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.weights[i * self.fan_in..(i + 1) * self.fan_in];
            *o = row.iter().zip(input).map(|(w, x)| w * x).sum();
        }
    }
}

/// Synaptic weights and neuron parameters of a whole network: `depth`
/// hidden LIF layers followed by a dense LIF readout with one neuron per
/// class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub descriptor: ArchDescriptor,
    pub hidden: Vec<LifLayer>,
    pub readout: LifLayer,
}

impl NetworkParams {
    /// Hidden layers followed by the readout.
    pub fn layers(&self) -> impl Iterator<Item = &LifLayer> {
        self.hidden.iter().chain(std::iter::once(&self.readout))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LifLayer> {
        self.hidden.iter_mut().chain(std::iter::once(&mut self.readout))
    }

    pub fn layer(&self, idx: usize) -> &LifLayer {
        if idx < self.hidden.len() {
            &self.hidden[idx]
        } else {
            &self.readout
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn time_steps(&self) -> usize {
        self.descriptor.time_steps
    }

    pub fn input_dim(&self) -> usize {
        self.descriptor.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.descriptor.num_classes
    }

    /// Squared L2 norm of all synaptic weights.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers()
            .flat_map(|l| l.weights.iter())
            .map(|w| w * w)
            .sum()
    }

    /// Attaches fresh per-time-step normalisation to every hidden layer.
    pub fn enable_bntt(&mut self) {
        let t = self.descriptor.time_steps;
        for layer in &mut self.hidden {
            if layer.bntt.is_none() {
                layer.bntt = Some(BnttParams::new(t, layer.width));
            }
        }
    }

    pub fn has_bntt(&self) -> bool {
        self.hidden.iter().any(|l| l.bntt.is_some())
    }
}

/// Draws a mask where every pre-synaptic column gets exactly
/// `out_degree(width, connectivity)` post-synaptic targets.
pub fn draw_mask(
    width: usize,
    fan_in: usize,
    connectivity: Connectivity,
    rng: &mut impl Rng,
) -> Vec<u8> {
    if connectivity == Connectivity::Dense {
        return vec![1; width * fan_in];
    }
    let k = out_degree(width, connectivity);
    let mut mask = vec![0u8; width * fan_in];
    for pre in 0..fan_in {
        for post in index::sample(rng, width, k) {
            mask[post * fan_in + pre] = 1;
        }
    }
    mask
}

fn init_layer(
    width: usize,
    fan_in: usize,
    connectivity: Connectivity,
    residual: bool,
    seed: u64,
    label: &str,
) -> LifLayer {
    let mut mask_rng = rng::stream(seed, &format!("mask/{label}"));
    let mut init_rng = rng::stream(seed, &format!("init/{label}"));
    let mask = draw_mask(width, fan_in, connectivity, &mut mask_rng);
    let bound = (6.0 / fan_in as f64).sqrt() / connectivity.density();
    let weights = mask
        .iter()
        .map(|&m| {
            let w = init_rng.random_range(-bound..=bound);
            if m != 0 {
                w
            } else {
                0.0
            }
        })
        .collect();
    LifLayer {
        width,
        fan_in,
        weights,
        mask,
        beta: INITIAL_BETA,
        theta: INITIAL_THETA,
        residual,
        bntt: None,
    }
}

/// Instantiates a network for `descriptor`, deterministically from `seed`.
pub fn build_network(descriptor: &ArchDescriptor, seed: u64) -> Result<NetworkParams> {
    descriptor.validate()?;
    let hidden = (0..descriptor.depth)
        .map(|l| {
            init_layer(
                descriptor.widths[l],
                descriptor.fan_in(l),
                descriptor.connectivity,
                descriptor.has_residual(l),
                seed,
                &format!("hidden{l}"),
            )
        })
        .collect();
    let readout = init_layer(
        descriptor.num_classes,
        descriptor.widths[descriptor.depth - 1],
        Connectivity::Dense,
        false,
        seed,
        "readout",
    );
    Ok(NetworkParams {
        descriptor: descriptor.clone(),
        hidden,
        readout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{DecayMode, SkipPattern};

    fn desc(conn: Connectivity) -> ArchDescriptor {
        ArchDescriptor::uniform(2, 64, 8, DecayMode::Fixed, conn, SkipPattern::None, 40, 4)
    }

    #[test]
    fn dense_build_has_full_masks_and_defaults() {
        let net = build_network(&desc(Connectivity::Dense), 7).unwrap();
        assert_eq!(net.hidden.len(), 2);
        for layer in &net.hidden {
            assert!(layer.mask.iter().all(|&m| m == 1));
            assert_eq!(layer.beta, 0.9);
            assert_eq!(layer.theta, 1.0);
        }
        assert_eq!(net.readout.width, 4);
        assert_eq!(net.readout.fan_in, 64);
    }

    #[test]
    fn sparse_masks_hit_exact_density() {
        let net = build_network(&desc(Connectivity::Sparse50), 7).unwrap();
        for layer in &net.hidden {
            let expected = (0.5 * (layer.width * layer.fan_in) as f64).round() as usize;
            assert_eq!(layer.nnz(), expected);
            for (w, m) in layer.weights.iter().zip(&layer.mask) {
                if *m == 0 {
                    assert_eq!(*w, 0.0);
                }
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_network(&desc(Connectivity::Sparse25), 11).unwrap();
        let b = build_network(&desc(Connectivity::Sparse25), 11).unwrap();
        assert_eq!(a, b);
        let c = build_network(&desc(Connectivity::Sparse25), 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dense_connect_concatenates_fan_in() {
        let mut d = desc(Connectivity::Dense);
        d.skip = SkipPattern::DenseConnect;
        let net = build_network(&d, 1).unwrap();
        assert_eq!(net.hidden[0].fan_in, 40);
        assert_eq!(net.hidden[1].fan_in, 40 + 64);
    }

    #[test]
    fn infeasible_residual_is_rejected() {
        let mut d = desc(Connectivity::Dense);
        d.skip = SkipPattern::Residual;
        d.widths = vec![64, 128];
        assert!(matches!(
            build_network(&d, 1),
            Err(crate::Error::Infeasible(_))
        ));
    }
}
