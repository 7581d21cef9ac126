pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
mod linalg;
pub mod model;
pub mod nn;
mod scalar;
mod seeds;
pub mod synth;
mod tape;
mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{ArchitectureConfig, Checkpoint, Embedding, Model};
pub use scalar::Scalar;
pub use seeds::derive_seed;
pub use tape::{GradientMap, Tape, Var};
pub use tensor::{tensor_from, Tensor};
