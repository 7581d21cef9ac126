//! Layer kinds of the SigNet stack and their backward rules.

mod conv;
mod dense;
mod dropout;
mod init;
mod lrn;
mod pool;

use serde::{Deserialize, Serialize};

use crate::tape::Var;

pub use conv::conv2d_reference;
pub(crate) use conv::{conv2d_backward, conv_output_size};
pub(crate) use dense::dense_backward;
pub use init::{glorot_bound, glorot_init};
pub(crate) use lrn::lrn_backward;
pub(crate) use pool::{maxpool2d_backward, pool_output_size};

/// Whether a forward pass is for training (dropout active) or inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Convolution operands already on the tape.
#[derive(Clone, Copy, Debug)]
pub struct Conv2dParams {
    /// `[out_channels, in_channels, kh, kw]`
    pub weights: Var,
    /// `[out_channels]`
    pub bias: Var,
    pub stride: usize,
    pub pad: usize,
}

/// Cross-channel local response normalization.
///
/// `b[c] = a[c] / (k + alpha * Σ a[j]²)^beta`, the sum running over the
/// `n / 2` neighbouring channels on each side of `c`, clipped at the edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub n: usize,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams { alpha: 1e-4, beta: 0.75, k: 2.0, n: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: (usize, usize),
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: Mode,
}
