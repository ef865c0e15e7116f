use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Result};
use crate::snn::arch::{DEPTHS, TIME_STEPS, WIDTHS};
use crate::snn::{ArchDescriptor, Connectivity, DecayMode, SkipPattern};

/// Value sets of the six searched dimensions plus the task's I/O sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub time_steps: Vec<usize>,
    pub decay_modes: Vec<DecayMode>,
    pub connectivities: Vec<Connectivity>,
    pub skips: Vec<SkipPattern>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl SearchSpace {
    /// The complete grid.
    pub fn full(input_dim: usize, num_classes: usize) -> Self {
        Self {
            depths: DEPTHS.to_vec(),
            widths: WIDTHS.to_vec(),
            time_steps: TIME_STEPS.to_vec(),
            decay_modes: DecayMode::ALL.to_vec(),
            connectivities: Connectivity::ALL.to_vec(),
            skips: SkipPattern::ALL.to_vec(),
            input_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty()
            || self.widths.is_empty()
            || self.time_steps.is_empty()
            || self.decay_modes.is_empty()
            || self.connectivities.is_empty()
            || self.skips.is_empty()
        {
            return validation_err("every search dimension needs at least one value");
        }
        if self.depths.contains(&0) || self.widths.contains(&0) || self.time_steps.contains(&0) {
            return validation_err("search dimensions must be positive");
        }
        if self.input_dim == 0 || self.num_classes < 2 {
            return validation_err("task needs input_dim >= 1 and num_classes >= 2");
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.depths.len()
            * self.widths.len()
            * self.time_steps.len()
            * self.decay_modes.len()
            * self.connectivities.len()
            * self.skips.len()
    }

    /// Largest descriptor of the space: maximal depth, width and window,
    /// dense synapses with dense skip connections and per-layer decay.
    pub fn envelope(&self) -> ArchDescriptor {
        ArchDescriptor::uniform(
            *self.depths.iter().max().unwrap_or(&1),
            *self.widths.iter().max().unwrap_or(&1),
            *self.time_steps.iter().max().unwrap_or(&1),
            DecayMode::LearnablePerLayer,
            Connectivity::Dense,
            SkipPattern::DenseConnect,
            self.input_dim,
            self.num_classes,
        )
    }
}

/// Every topology of the space in lexicographic order of
/// (depth, width, time steps, decay, connectivity, skip), each with a
/// uniform width across layers.
pub fn enumerate_space(space: &SearchSpace) -> Result<Vec<ArchDescriptor>> {
    space.validate()?;
    let mut out = Vec::with_capacity(space.cardinality());
    for &d in &space.depths {
        for &n in &space.widths {
            for &t in &space.time_steps {
                for &decay in &space.decay_modes {
                    for &conn in &space.connectivities {
                        for &skip in &space.skips {
                            out.push(ArchDescriptor::uniform(
                                d,
                                n,
                                t,
                                decay,
                                conn,
                                skip,
                                space.input_dim,
                                space.num_classes,
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
