//! Network data model, LIF dynamics, encoders and the dense float
//! reference forward pass.

pub mod arch;
pub mod encode;
pub mod forward;
pub mod lif;
pub mod network;
pub mod raster;

pub use arch::{out_degree, ArchDescriptor, Connectivity, DecayMode, SkipPattern};
pub use encode::{
    delta_encode, delta_encode_channels, threshold_encode, EncoderConfig, EncoderKind,
};
pub use forward::{
    argmax_lowest, firing_rate_stats, forward_dense, forward_dense_masked, ForwardOutput,
    RateStats,
};
pub use lif::{lif_neuron, lif_step, MembraneState};
pub use network::{build_network, draw_mask, LifLayer, NetworkParams};
pub use raster::SpikeRaster;
