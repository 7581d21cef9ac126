//! Distances, threshold sweep metrics and the cross-dataset matrix.

mod cross;
mod distances;
mod sweep;

pub use cross::{cross_dataset_matrix, evaluate_pairs, CrossMatrix, CrossModel, CrossSet, ERROR_MARKER};
pub use distances::{compute_distances, embed_images, DistanceRecord, EMBED_BATCH};
pub use sweep::{far_frr, threshold_sweep, EvalReport, SweepPoint, DEFAULT_STEP};
