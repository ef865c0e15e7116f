//! Weight-sharing supernet and leading-index subnet extraction.

use super::space::SearchSpace;
use crate::error::{validation_err, Result};
use crate::snn::network::INITIAL_BETA;
use crate::snn::{build_network, ArchDescriptor, DecayMode, NetworkParams, SkipPattern};
use crate::train::{fine_tune, BnttParams, History, TaskData, TrainConfig};

/// The maximal network of a search space.
#[derive(Clone, Debug, PartialEq)]
pub struct Supernet {
    pub net: NetworkParams,
}

/// Builds the envelope network and trains it on the task at its window.
pub fn supernet_build(space: &SearchSpace, task: &TaskData, config: &TrainConfig) -> Result<(Supernet, History)> {
    let envelope = space.envelope();
    let data = task.for_steps(envelope.time_steps)?;
    let mut net = build_network(&envelope, config.seed)?;
    let history = fine_tune(&mut net, data, config)?;
    Ok((Supernet { net }, history))
}

impl Supernet {
    pub fn envelope(&self) -> &ArchDescriptor {
        &self.net.descriptor
    }

    /// Column offset of source `k` inside hidden layer `l`'s fan-in, if
    /// the supernet wires that source into the layer.
    fn source_offset(&self, l: usize, k: usize) -> Option<usize> {
        let env = self.envelope();
        let mut off = 0;
        for s in env.sources(l) {
            if s == k {
                return Some(off);
            }
            off += env.source_width(s);
        }
        None
    }

    /// Slices the candidate out of the supernet: leading layers, leading
    /// rows and columns of each source block, leading time steps of the
    /// normalisation, then the candidate's own mask (drawn from `seed`).
    pub fn extract(&self, descriptor: &ArchDescriptor, seed: u64) -> Result<NetworkParams> {
        descriptor.validate()?;
        let env = self.envelope();
        if descriptor.depth > env.depth
            || descriptor.time_steps > env.time_steps
            || descriptor.input_dim != env.input_dim
            || descriptor.num_classes != env.num_classes
            || descriptor.widths.iter().zip(&env.widths).any(|(a, b)| a > b)
        {
            return validation_err(format!(
                "descriptor {} lies outside the supernet envelope {}",
                descriptor.key(),
                env.key()
            ));
        }
        let mut net = build_network(descriptor, seed)?;
        let shared_beta = self.net.layers().map(|l| l.beta).sum::<f64>() / self.net.num_layers() as f64;

        for l in 0..descriptor.depth {
            let src = &self.net.hidden[l];
            let dst = &mut net.hidden[l];
            let mut col = 0;
            for k in descriptor.sources(l) {
                let off = self.source_offset(l, k).ok_or_else(|| {
                    crate::Error::Validation(format!(
                        "supernet layer {l} has no connection from source {k}"
                    ))
                })?;
                let w = descriptor.source_width(k);
                for i in 0..dst.width {
                    for j in 0..w {
                        dst.weights[i * dst.fan_in + col + j] = src.weights[i * src.fan_in + off + j];
                    }
                }
                col += w;
            }
            dst.apply_mask();
            dst.beta = match descriptor.decay_mode {
                DecayMode::Fixed => INITIAL_BETA,
                DecayMode::LearnableShared => shared_beta,
                DecayMode::LearnablePerLayer => src.beta,
            };
            dst.theta = src.theta;
            if let Some(bn) = &src.bntt {
                dst.bntt = Some(slice_bntt(bn, descriptor.time_steps, dst.width));
            }
        }

        let last = descriptor.depth - 1;
        let src = &self.net.readout;
        let dst = &mut net.readout;
        for i in 0..dst.width {
            for j in 0..dst.fan_in {
                dst.weights[i * dst.fan_in + j] = src.weights[i * src.fan_in + j];
            }
        }
        dst.beta = match descriptor.decay_mode {
            DecayMode::Fixed => INITIAL_BETA,
            DecayMode::LearnableShared => shared_beta,
            DecayMode::LearnablePerLayer => src.beta,
        };
        debug_assert_eq!(dst.fan_in, descriptor.widths[last]);
        Ok(net)
    }
}

fn slice_bntt(bn: &BnttParams, time_steps: usize, width: usize) -> BnttParams {
    let take = |v: &[f64]| -> Vec<f64> {
        (0..time_steps)
            .flat_map(|t| v[t * bn.width..t * bn.width + width].iter().copied())
            .collect()
    };
    BnttParams {
        time_steps,
        width,
        scale: take(&bn.scale),
        shift: take(&bn.shift),
        running_mean: take(&bn.running_mean),
        running_var: take(&bn.running_var),
    }
}

/// Whether every source the candidate needs is wired in the supernet.
pub fn supernet_covers(envelope: &ArchDescriptor, descriptor: &ArchDescriptor) -> bool {
    envelope.skip == SkipPattern::DenseConnect || envelope.skip == descriptor.skip
}
