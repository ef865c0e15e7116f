//! Event-driven fixed-point inference with operation counting.

pub mod counter;
pub mod engine;
pub mod events;
pub mod fixed;

pub use counter::OpCounter;
pub use engine::{infer_dense_fixed, infer_sparse, mac_reduction, sparse_accumulate, InferenceOutcome};
pub use events::{from_events, to_events, EventList};
pub use fixed::{neuron_update, quantize_layer, quantize_weights, FixedLayer, FixedNetwork, FixedWeights};
