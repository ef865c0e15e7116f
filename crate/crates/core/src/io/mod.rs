//! Datasets, model container and report writers.

pub mod container;
pub mod dataset;
pub mod reports;

pub use dataset::{
    encode_sample, generate_synthetic, DataFormat, Dataset, DatasetManifest, EncodingParams, GeneratorParams,
    RawSplit, SplitFiles, SyntheticTask,
};
pub use container::{config_hash, load_model, save_model, ModelContainer, ModelMetadata, FORMAT_VERSION, MAGIC};
pub use reports::{
    save_candidates, save_front, save_history, save_telemetry, write_candidates, write_front, write_history, write_json,
    write_telemetry, CANDIDATES_HEADER, HISTORY_HEADER, TELEMETRY_HEADER,
};
