mod activation;
mod arch;
mod checkpoint;
mod signet;

pub use activation::ActivationMaps;
pub use arch::{ActivationShape, ArchitectureConfig, LayerSpec};
pub use checkpoint::{Checkpoint, ARCH_KEY, FORMAT_VERSION, MAGIC};
pub use signet::{pair_distance, pair_distance_on_tape, BoundParams, Embedding, Model};
