//! Pair distances under a trained model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{pair_image_ids, ImageId, PairSample, PreparedImages};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// Images embedded per forward pass.
pub const EMBED_BATCH: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    /// Position of the pair in the input list.
    pub pair: usize,
    pub y: u8,
    pub distance: f64,
}

/// Inference-mode embeddings of `ids`, each image embedded once.
pub fn embed_images(model: &Model, images: &PreparedImages, ids: &[ImageId]) -> Result<BTreeMap<ImageId, Vec<f32>>> {
    let cfg = model.config();
    if (images.height, images.width) != (cfg.input_height, cfg.input_width) {
        return Err(Error::shape(
            "compute_distances",
            format!(
                "images are {}x{}, model expects {}x{}",
                images.height, images.width, cfg.input_height, cfg.input_width
            ),
        ));
    }
    let mut out = BTreeMap::new();
    for chunk in ids.chunks(EMBED_BATCH) {
        let tensors = chunk.iter().map(|&id| images.get(id)).collect::<Result<Vec<_>>>()?;
        let batch = Tensor::stack(&tensors)?;
        let emb = model.embed_infer(&batch)?;
        let dim = emb.vector.shape()[1];
        for (&id, row) in chunk.iter().zip(emb.vector.data().chunks(dim)) {
            out.insert(id, row.to_vec());
        }
    }
    Ok(out)
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| {
            let d = f64::from(p) - f64::from(q);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// One record per pair, in input order.
pub fn compute_distances(model: &Model, pairs: &[PairSample], images: &PreparedImages) -> Result<Vec<DistanceRecord>> {
    let embeddings = embed_images(model, images, &pair_image_ids(pairs))?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, p)| DistanceRecord { pair: i, y: p.y, distance: euclidean(&embeddings[&p.a], &embeddings[&p.b]) })
        .collect())
}
