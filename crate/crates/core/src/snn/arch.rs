use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};

pub const DEPTHS: [usize; 4] = [2, 3, 4, 5];
pub const WIDTHS: [usize; 4] = [64, 128, 256, 512];
pub const TIME_STEPS: [usize; 4] = [4, 8, 16, 32];

/// Membrane decay schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    Fixed,
    LearnableShared,
    LearnablePerLayer,
}

/// Synaptic connectivity density.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    Dense,
    Sparse50,
    Sparse25,
}

/// Skip-connection pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipPattern {
    None,
    Residual,
    DenseConnect,
}

impl DecayMode {
    pub const ALL: [DecayMode; 3] = [
        DecayMode::Fixed,
        DecayMode::LearnableShared,
        DecayMode::LearnablePerLayer,
    ];

    pub fn is_learnable(self) -> bool {
        !matches!(self, DecayMode::Fixed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecayMode::Fixed => "fixed",
            DecayMode::LearnableShared => "learnable-shared",
            DecayMode::LearnablePerLayer => "learnable-per-layer",
        }
    }
}

impl Connectivity {
    pub const ALL: [Connectivity; 3] = [
        Connectivity::Dense,
        Connectivity::Sparse50,
        Connectivity::Sparse25,
    ];

    /// Fraction of synapses present.
    pub fn density(self) -> f64 {
        match self {
            Connectivity::Dense => 1.0,
            Connectivity::Sparse50 => 0.5,
            Connectivity::Sparse25 => 0.25,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Connectivity::Dense => "dense",
            Connectivity::Sparse50 => "sparse50",
            Connectivity::Sparse25 => "sparse25",
        }
    }
}

impl SkipPattern {
    pub const ALL: [SkipPattern; 3] = [
        SkipPattern::None,
        SkipPattern::Residual,
        SkipPattern::DenseConnect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkipPattern::None => "none",
            SkipPattern::Residual => "residual",
            SkipPattern::DenseConnect => "dense-connect",
        }
    }
}

macro_rules! impl_enum_text {
    ($ty:ty, $what:literal, [$($alias:literal => $val:expr),* $(,)?]) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($alias => Ok($val),)*
                    other => validation_err(format!("unknown {} '{}'", $what, other)),
                }
            }
        }
    };
}

impl_enum_text!(DecayMode, "decay mode", [
    "fixed" => DecayMode::Fixed,
    "learnable-shared" => DecayMode::LearnableShared,
    "shared" => DecayMode::LearnableShared,
    "learnable-per-layer" => DecayMode::LearnablePerLayer,
    "per-layer" => DecayMode::LearnablePerLayer,
]);

impl_enum_text!(Connectivity, "connectivity", [
    "dense" => Connectivity::Dense,
    "sparse50" => Connectivity::Sparse50,
    "sparse25" => Connectivity::Sparse25,
]);

impl_enum_text!(SkipPattern, "skip pattern", [
    "none" => SkipPattern::None,
    "residual" => SkipPattern::Residual,
    "dense-connect" => SkipPattern::DenseConnect,
    "dense" => SkipPattern::DenseConnect,
]);

/// One point of the architecture search space plus the task's I/O sizes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub depth: usize,
    pub widths: Vec<usize>,
    pub time_steps: usize,
    pub decay_mode: DecayMode,
    pub connectivity: Connectivity,
    pub skip: SkipPattern,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ArchDescriptor {
    /// Descriptor with the same width at every layer.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        depth: usize,
        width: usize,
        time_steps: usize,
        decay_mode: DecayMode,
        connectivity: Connectivity,
        skip: SkipPattern,
        input_dim: usize,
        num_classes: usize,
    ) -> Self {
        Self {
            depth,
            widths: vec![width; depth],
            time_steps,
            decay_mode,
            connectivity,
            skip,
            input_dim,
            num_classes,
        }
    }

    /// Structural validity: positive sizes and consistent lengths.
    ///
    /// Off-grid sizes are allowed here so tiny networks can be built for
    /// gradient checks; [`ArchDescriptor::validate_search_space`] enforces
    /// the search-space grid.
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return validation_err("depth must be at least 1");
        }
        if self.widths.len() != self.depth {
            return validation_err(format!(
                "{} widths given for depth {}",
                self.widths.len(),
                self.depth
            ));
        }
        if self.widths.contains(&0) {
            return validation_err("layer widths must be positive");
        }
        if self.time_steps == 0 {
            return validation_err("time_steps must be positive");
        }
        if self.input_dim == 0 {
            return validation_err("input_dim must be at least 1");
        }
        if self.num_classes < 2 {
            return validation_err("num_classes must be at least 2");
        }
        if self.skip == SkipPattern::Residual && !self.residual_wireable() {
            return Err(Error::Infeasible(
                "residual skip requested but no adjacent layer widths match".into(),
            ));
        }
        Ok(())
    }

    /// Validity against the full search-space grid.
    pub fn validate_search_space(&self) -> Result<()> {
        self.validate()?;
        if !DEPTHS.contains(&self.depth) {
            return validation_err(format!("depth {} not in {:?}", self.depth, DEPTHS));
        }
        if let Some(w) = self.widths.iter().find(|w| !WIDTHS.contains(w)) {
            return validation_err(format!("width {} not in {:?}", w, WIDTHS));
        }
        if !TIME_STEPS.contains(&self.time_steps) {
            return validation_err(format!(
                "time_steps {} not in {:?}",
                self.time_steps, TIME_STEPS
            ));
        }
        Ok(())
    }

    /// Whether hidden layer `l` (0-based) receives an identity skip from its
    /// predecessor. Layer 0's predecessor is the encoder output.
    pub fn has_residual(&self, layer: usize) -> bool {
        self.skip == SkipPattern::Residual
            && layer > 0
            && self.widths[layer] == self.widths[layer - 1]
    }

    fn residual_wireable(&self) -> bool {
        (1..self.depth).any(|l| self.widths[l] == self.widths[l - 1])
    }

    /// Width of the spike vector produced by source `k`, where source 0 is
    /// the encoder and source `k > 0` is hidden layer `k - 1`.
    pub fn source_width(&self, k: usize) -> usize {
        if k == 0 {
            self.input_dim
        } else {
            self.widths[k - 1]
        }
    }

    /// Sources feeding hidden layer `l`, in concatenation order.
    pub fn sources(&self, layer: usize) -> Vec<usize> {
        match self.skip {
            SkipPattern::DenseConnect => (0..=layer).collect(),
            _ => vec![layer],
        }
    }

    /// Fan-in of hidden layer `l`.
    pub fn fan_in(&self, layer: usize) -> usize {
        self.sources(layer)
            .into_iter()
            .map(|k| self.source_width(k))
            .sum()
    }

    /// Mean hidden width.
    pub fn mean_width(&self) -> f64 {
        self.widths.iter().sum::<usize>() as f64 / self.depth as f64
    }

    /// Stable text key used for seeding and reporting.
    pub fn key(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!(
            "D{}-N{}-T{}-{}-{}-{}-in{}-c{}",
            self.depth,
            widths.join("x"),
            self.time_steps,
            self.decay_mode,
            self.connectivity,
            self.skip,
            self.input_dim,
            self.num_classes
        )
    }
}

/// Post-synaptic targets drawn per pre-synaptic index for a layer of
/// `width` neurons at the given density. Every pre-synaptic index gets the
/// same count, so event-driven accumulate counts are exactly proportional
/// to input activity.
pub fn out_degree(width: usize, connectivity: Connectivity) -> usize {
    let k = (connectivity.density() * width as f64).round() as usize;
    k.clamp(1, width)
}
