//! Per-channel response maps of a convolution layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::signet::Model;
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct ActivationMaps<T: Scalar = f32> {
    /// One `[height, width]` map per output channel, after the ReLU.
    pub maps: Vec<Tensor<T>>,
    /// Sum of squared activations per channel.
    pub energy: Vec<f64>,
    /// Channel indices by descending energy; ties keep the lower index first.
    pub ranking: Vec<usize>,
}

impl<T: Scalar> ActivationMaps<T> {
    /// The `k` highest-energy maps, paired with their channel index.
    pub fn top(&self, k: usize) -> Vec<(usize, &Tensor<T>)> {
        self.ranking.iter().take(k).map(|&c| (c, &self.maps[c])).collect()
    }
}

impl<T: Scalar> Model<T> {
    /// Index of the last convolution layer in the stack.
    pub fn last_conv_layer(&self) -> Option<usize> {
        self.config().layers.iter().rposition(|l| l.is_conv())
    }

    /// Response maps of the convolution at `layer_index` for one image,
    /// given as `[H, W]`, `[1, H, W]` or `[1, 1, H, W]`.
    pub fn activation_maps(&self, image: &Tensor<T>, layer_index: usize) -> Result<ActivationMaps<T>> {
        match self.config().layers.get(layer_index) {
            Some(l) if l.is_conv() => {}
            _ => return Err(Error::InvalidArgument(format!("layer {layer_index} is not a convolution layer"))),
        }
        let (h, w) = (self.config().input_height, self.config().input_width);
        let batch = image.reshape(&[1, 1, h, w]).map_err(|_| {
            Error::shape("activation_maps", format!("expected a {h}x{w} image, got {:?}", image.shape()))
        })?;

        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let x = tape.constant(batch);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward_to(&mut tape, &bound, x, Mode::Infer, &mut rng, Some(layer_index))?;
        let act = tape.value(out);
        let &[_, channels, oh, ow] = act.shape() else { unreachable!("conv output is rank 4") };

        let mut maps = Vec::with_capacity(channels);
        let mut energy: Vec<f64> = Vec::with_capacity(channels);
        for plane in act.data().chunks(oh * ow) {
            energy.push(plane.iter().map(|v| v.as_f64() * v.as_f64()).sum());
            maps.push(Tensor::from_vec(vec![oh, ow], plane.to_vec())?);
        }
        let mut ranking: Vec<usize> = (0..channels).collect();
        ranking.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
        Ok(ActivationMaps { maps, energy, ranking })
    }
}
