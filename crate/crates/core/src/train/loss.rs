//! Contrastive loss over embedding pairs.

use serde::{Deserialize, Serialize};

use crate::data::{DISSIMILAR, SIMILAR};
use crate::error::{Error, Result};
use crate::model::pair_distance_on_tape;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveLossParams {
    /// Weight of the similar-pair attraction term.
    pub alpha: f64,
    /// Weight of the dissimilar-pair hinge term.
    pub beta: f64,
    pub margin: f64,
}

impl Default for ContrastiveLossParams {
    fn default() -> Self {
        ContrastiveLossParams { alpha: 0.5, beta: 0.5, margin: 1.0 }
    }
}

impl ContrastiveLossParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.alpha) && ok(self.beta) && ok(self.margin) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("loss parameters must be positive, got {self:?}")))
        }
    }
}

/// `mean(α(1−y)·D² + β·y·max(0, m − D)²)` with `D = ‖e1 − e2‖₂` per row;
/// `y = 0` marks a similar pair.
pub fn contrastive_loss<T: Scalar>(
    tape: &mut Tape<T>,
    e1: Var,
    e2: Var,
    labels: &[u8],
    params: &ContrastiveLossParams,
) -> Result<Var> {
    params.validate()?;
    if let Some(bad) = labels.iter().find(|&&y| y != SIMILAR && y != DISSIMILAR) {
        return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
    }
    let d = pair_distance_on_tape(tape, e1, e2)?;
    if tape.value(d).numel() != labels.len() {
        return Err(Error::shape(
            "contrastive_loss",
            format!("{} labels for {} pairs", labels.len(), tape.value(d).numel()),
        ));
    }
    let weights = |w: f64, on: u8| {
        let v = labels.iter().map(|&y| T::cast(if y == on { w } else { 0.0 })).collect();
        Tensor::from_vec(vec![labels.len()], v)
    };
    let attract_w = tape.constant(weights(params.alpha, SIMILAR)?);
    let repel_w = tape.constant(weights(params.beta, DISSIMILAR)?);

    let d2 = tape.square(d);
    let attract = tape.mul(d2, attract_w)?;
    let neg = tape.scalar_mul(d, -T::one());
    let gap = tape.add_scalar(neg, T::cast(params.margin));
    let hinge = tape.max_with_scalar(gap, T::zero());
    let hinge2 = tape.square(hinge);
    let repel = tape.mul(hinge2, repel_w)?;
    let per_pair = tape.add(attract, repel)?;
    Ok(tape.mean(per_pair))
}
