//! Dataset indexing, preprocessing, writer splits and pair generation.

mod index;
mod pairs;
mod preprocess;

pub use index::{
    load_dataset, load_image, DatasetIndex, ImageId, ImageRecord, SignatureImage, SignatureKind, WriterImages,
};
pub use pairs::{
    build_protocol, candidate_count, generate_pairs, generate_pairs_from, manifest_text, pair_image_ids, split_writers,
    write_manifest, writer_seed, PairSample, PairingMode, Protocol, SplitSpec, DISSIMILAR, SIMILAR,
};
pub use preprocess::{
    dataset_std, pixel_std, prepare_images, preprocess, resize_bilinear, PreparedImages, ResizedImages,
};
