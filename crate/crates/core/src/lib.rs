//! EdgeSpike: spiking neural networks for low-power autonomous sensing.
//!
//! The crate is organised bottom-up:
//!
//! - [`snn`]: LIF dynamics, spike encoders and the dense float reference.
//! - [`train`]: surrogate-gradient BPTT, schedules, AdamW and BNTT.
//! - [`runtime`]: event-driven fixed-point inference with op counting.
//! - [`energy`]: calibrated energy proxy and node energy budget.
//! - [`nas`]: search space enumeration, constraints, supernet slicing,
//!   Pareto front and knee selection.
//! - [`plasticity`]: trace-based Hebbian adaptation of the first layer.
//! - [`fieldsim`]: multi-node deployment simulation under input drift.
//! - [`io`]: datasets, model container and report writers.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod fieldsim;
pub mod io;
pub mod nas;
pub mod plasticity;
pub mod rng;
pub mod runtime;
pub mod snn;
pub mod train;

pub use error::{Error, Result};
pub use snn::{
    ArchDescriptor, Connectivity, DecayMode, LifLayer, MembraneState, NetworkParams, SkipPattern,
    SpikeRaster,
};
