//! Fixtures shared by the kernel benchmarks.

use edgespike::rng;
use edgespike::runtime::{quantize_weights, FixedNetwork};
use edgespike::snn::{build_network, ArchDescriptor, Connectivity, DecayMode, SkipPattern};
use edgespike::{NetworkParams, Result, SpikeRaster};
use rand::Rng;

/// Two hidden layers of `width` neurons over a 40-channel input.
pub fn network(width: usize, time_steps: usize, connectivity: Connectivity) -> Result<(NetworkParams, FixedNetwork)> {
    let d = ArchDescriptor::uniform(2, width, time_steps, DecayMode::Fixed, connectivity, SkipPattern::None, 40, 4);
    let net = build_network(&d, 1)?;
    let fixed = quantize_weights(&net)?;
    Ok((net, fixed))
}

/// Bernoulli raster with spike probability `rho`.
pub fn raster(time_steps: usize, neurons: usize, rho: f64, seed: u64) -> Result<SpikeRaster> {
    let mut r = rng::stream(seed, "bench/raster");
    let data = (0..time_steps * neurons).map(|_| r.random_bool(rho) as u8).collect();
    SpikeRaster::from_vec(time_steps, neurons, data)
}
