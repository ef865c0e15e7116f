use serde::{Deserialize, Serialize};

use crate::energy::{proxy_energy_with, EnergyBreakdown, HardwareProfile, ProxyMode};
use crate::error::{validation_err, Result};
use crate::snn::{out_degree, ArchDescriptor};

pub const KIB: u64 = 1024;
/// Memory bound for neuromorphic targets.
pub const NEUROMORPHIC_M_MAX: u64 = 512 * KIB;
/// Memory bound for microcontroller targets.
pub const MCU_M_MAX: u64 = 128 * KIB;

/// Bytes needed by a hidden stack at 8-bit weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub weight_bytes: u64,
    /// Largest per-step working set over layers: 16-bit membranes, packed
    /// spike bits and a 16-bit active-index buffer over the fan-in.
    pub peak_activation_bytes: u64,
}

impl Footprint {
    pub fn total(&self) -> u64 {
        self.weight_bytes + self.peak_activation_bytes
    }
}

/// Synapses stored in hidden layer `l`.
pub fn layer_nnz(descriptor: &ArchDescriptor, l: usize) -> u64 {
    (descriptor.fan_in(l) * out_degree(descriptor.widths[l], descriptor.connectivity)) as u64
}

pub fn memory_footprint(descriptor: &ArchDescriptor) -> Result<Footprint> {
    descriptor.validate()?;
    let weight_bytes = (0..descriptor.depth).map(|l| layer_nnz(descriptor, l)).sum();
    let peak_activation_bytes = (0..descriptor.depth)
        .map(|l| {
            let n = descriptor.widths[l] as u64;
            2 * n + n.div_ceil(8) + 2 * descriptor.fan_in(l) as u64
        })
        .max()
        .unwrap_or(0);
    Ok(Footprint {
        weight_bytes,
        peak_activation_bytes,
    })
}

/// Dense-equivalent synaptic operations per inference.
pub fn dense_ops(descriptor: &ArchDescriptor) -> u64 {
    (0..descriptor.depth)
        .map(|l| layer_nnz(descriptor, l) * descriptor.time_steps as u64)
        .sum()
}

/// Energy, memory and optional operation bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Joules per inference.
    pub e_max: f64,
    /// Bytes.
    pub m_max: u64,
    pub max_dense_ops: Option<u64>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            e_max: f64::INFINITY,
            m_max: NEUROMORPHIC_M_MAX,
            max_dense_ops: None,
        }
    }
}

impl ConstraintSet {
    pub fn unbounded() -> Self {
        Self {
            e_max: f64::INFINITY,
            m_max: u64::MAX,
            max_dense_ops: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_max > 0.0) || self.m_max == 0 || self.max_dense_ops == Some(0) {
            return validation_err("constraint bounds must be positive");
        }
        Ok(())
    }

    pub fn admits(&self, energy: f64, footprint: &Footprint, descriptor: &ArchDescriptor) -> bool {
        energy <= self.e_max
            && footprint.total() <= self.m_max
            && self.max_dense_ops.is_none_or(|m| dense_ops(descriptor) <= m)
    }
}

/// A candidate that passed the pre-training screen.
#[derive(Clone, Debug, PartialEq)]
pub struct ScreenedCandidate {
    /// Position in the enumeration.
    pub index: usize,
    pub descriptor: ArchDescriptor,
    pub predicted: EnergyBreakdown,
    pub footprint: Footprint,
}

/// Screens candidates with a uniform activity estimate; survivors are
/// sorted by predicted energy (stable). An empty result is not an error.
pub fn prune_infeasible(
    candidates: &[ArchDescriptor],
    constraints: &ConstraintSet,
    profile: &HardwareProfile,
    rho_estimate: f64,
) -> Result<Vec<ScreenedCandidate>> {
    prune_infeasible_with(candidates, constraints, profile, rho_estimate, ProxyMode::Verbatim)
}

pub fn prune_infeasible_with(
    candidates: &[ArchDescriptor],
    constraints: &ConstraintSet,
    profile: &HardwareProfile,
    rho_estimate: f64,
    mode: ProxyMode,
) -> Result<Vec<ScreenedCandidate>> {
    constraints.validate()?;
    if !(0.0..=1.0).contains(&rho_estimate) {
        return validation_err(format!("rate estimate {rho_estimate} outside [0, 1]"));
    }
    let mut kept = Vec::new();
    for (index, d) in candidates.iter().enumerate() {
        let rho = vec![rho_estimate; d.depth];
        let predicted = proxy_energy_with(d, &rho, profile, mode)?;
        let footprint = memory_footprint(d)?;
        if constraints.admits(predicted.total, &footprint, d) {
            kept.push(ScreenedCandidate {
                index,
                descriptor: d.clone(),
                predicted,
                footprint,
            });
        }
    }
    kept.sort_by(|a, b| a.predicted.total.total_cmp(&b.predicted.total));
    Ok(kept)
}
