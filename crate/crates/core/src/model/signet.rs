//! The twin embedding network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchitectureConfig, LayerSpec};
use crate::error::{Error, Result};
use crate::nn::{glorot_init, Conv2dParams, DropoutSpec, Mode};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A batch of embedding vectors, `[N, embedding_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T: Scalar = f32> {
    pub vector: Tensor<T>,
}

/// One parameter set shared by both branches of the twin.
///
/// Embedding two images runs this network twice; there is no second copy
/// of the weights to keep in sync.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar = f32> {
    config: ArchitectureConfig,
    params: Vec<(String, Tensor<T>)>,
}

/// Parameter handles registered on one tape, in model order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Scalar> Model<T> {
    /// Glorot-uniform weights and zero biases, drawn in layer order from a
    /// generator seeded with `seed`.
    pub fn build(config: ArchitectureConfig, seed: u64) -> Result<Self> {
        let shapes = config.parameter_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(shapes.len());
        for (name, shape) in shapes {
            let t = if name.ends_with(".bias") { Tensor::zeros(&shape)? } else { glorot_init(&shape, &mut rng)? };
            params.push((name, t));
        }
        log::debug!("built model with {} parameters", config.parameter_count()?);
        Ok(Model { config, params })
    }

    /// Assembles a model from named tensors, checking names and shapes
    /// against the architecture.
    pub fn from_parts(config: ArchitectureConfig, mut tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut params = Vec::new();
        for (name, shape) in config.parameter_shapes()? {
            let pos = tensors
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            let (_, t) = tensors.swap_remove(pos);
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, architecture expects {shape:?}",
                    t.shape()
                )));
            }
            params.push((name, t));
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn params(&self) -> &[(String, Tensor<T>)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.iter().map(|(n, t)| (n.clone(), t.cast())).collect() }
    }

    /// Places every parameter on `tape`, as trainable parameters or as
    /// constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<BoundParams> {
        let mut vars = Vec::with_capacity(self.params.len());
        for (name, t) in &self.params {
            vars.push(if trainable { tape.param(name, t.clone())? } else { tape.constant(t.clone()) });
        }
        Ok(BoundParams { vars })
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (h, w) = (self.config.input_height, self.config.input_width);
        match *shape {
            [_, 1, ih, iw] if ih == h && iw == w => Ok(()),
            _ => Err(Error::shape("embed", format!("expected [N, 1, {h}, {w}] input, got {shape:?}"))),
        }
    }

    /// Runs layers `0..=last` (all layers when `last` is `None`) on `x`.
    pub fn forward_to<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        x: Var,
        mode: Mode,
        rng: &mut R,
        last: Option<usize>,
    ) -> Result<Var> {
        self.check_input(tape.value(x).shape())?;
        let stop = last.unwrap_or(self.config.layers.len() - 1);
        let mut params = bound.vars.chunks(2);
        let mut h = x;
        for layer in &self.config.layers[..=stop] {
            h = match *layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let [weights, bias] = params.next().expect("bound params match config") else { unreachable!() };
                    let conv = tape.conv2d(h, &Conv2dParams { weights: *weights, bias: *bias, stride, pad })?;
                    tape.relu(conv)
                }
                LayerSpec::Lrn(ref p) => tape.lrn(h, p)?,
                LayerSpec::Pool(ref spec) => tape.maxpool2d(h, spec)?,
                LayerSpec::PoolDropout { ref pool, rate } => {
                    let pooled = tape.maxpool2d(h, pool)?;
                    tape.dropout(pooled, &DropoutSpec { rate, mode }, rng)?
                }
                LayerSpec::Flatten => tape.flatten(h)?,
                LayerSpec::Dense { .. } | LayerSpec::DenseDropout { .. } => {
                    let [w, b] = params.next().expect("bound params match config") else { unreachable!() };
                    let z = tape.dense(h, *w, *b)?;
                    let a = tape.relu(z);
                    match *layer {
                        LayerSpec::DenseDropout { rate, .. } => tape.dropout(a, &DropoutSpec { rate, mode }, rng)?,
                        _ => a,
                    }
                }
            };
        }
        Ok(h)
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        x: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        self.forward_to(tape, bound, x, mode, rng, None)
    }

    /// Embeds a `[N, 1, H, W]` batch without recording gradients.
    pub fn embed<R: Rng + ?Sized>(&self, batch: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Embedding<T>> {
        self.check_input(batch.shape())?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let x = tape.constant(batch.clone());
        let out = self.forward(&mut tape, &bound, x, mode, rng)?;
        Ok(Embedding { vector: tape.value(out).clone() })
    }

    /// Inference-mode embedding; dropout is inactive so no generator is needed.
    pub fn embed_infer(&self, batch: &Tensor<T>) -> Result<Embedding<T>> {
        self.embed(batch, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))
    }
}

/// Row-wise Euclidean distance between two embedding batches.
pub fn pair_distance<T: Scalar>(e1: &Embedding<T>, e2: &Embedding<T>) -> Result<Vec<T>> {
    let (a, b) = (&e1.vector, &e2.vector);
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(Error::shape("pair_distance", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let d = a.shape()[1];
    Ok(a.data()
        .chunks(d)
        .zip(b.data().chunks(d))
        .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>().sqrt())
        .collect())
}

/// Differentiable `‖e1 − e2‖₂` per row, recorded on `tape`.
pub fn pair_distance_on_tape<T: Scalar>(tape: &mut Tape<T>, e1: Var, e2: Var) -> Result<Var> {
    let diff = tape.sub(e1, e2)?;
    tape.row_norm(diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tensor_from;
    use rand_distr::{Distribution, Normal};

    fn random_batch(n: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, 1.0).unwrap();
        let data: Vec<f32> = (0..n * 32 * 48).map(|_| normal.sample(&mut rng)).collect();
        Tensor::from_vec(vec![n, 1, 32, 48], data).unwrap()
    }

    fn tiny(seed: u64) -> Model {
        Model::build(ArchitectureConfig::tiny(), seed).unwrap()
    }

    fn embedding(rows: &[&[f32]]) -> Embedding {
        let d = rows[0].len();
        Embedding { vector: tensor_from(&[rows.len(), d], rows.iter().flat_map(|r| r.iter().copied())).unwrap() }
    }

    #[test]
    fn build_is_seeded() {
        assert_eq!(tiny(1), tiny(1));
        assert_ne!(tiny(1), tiny(2));
        let model = tiny(1);
        assert_eq!(model.parameter_count(), 81_328);
        for (name, t) in model.params() {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn embeddings_are_finite_and_shaped() {
        let e = tiny(0).embed_infer(&random_batch(3, 0)).unwrap();
        assert_eq!(e.vector.shape(), [3, 16]);
        assert!(e.vector.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn infer_is_deterministic_and_batch_independent() {
        let model = tiny(4);
        let batch = random_batch(2, 9);
        let both = model.embed_infer(&batch).unwrap();
        assert_eq!(both, model.embed_infer(&batch).unwrap());
        let first = model.embed_infer(&random_batch(1, 9)).unwrap();
        let (h, w) = (32, 48);
        let second = Tensor::from_vec(vec![1, 1, h, w], batch.data()[h * w..].to_vec()).unwrap();
        let second = model.embed_infer(&second).unwrap();
        assert_eq!(&both.vector.data()[..16], first.vector.data());
        assert_eq!(&both.vector.data()[16..], second.vector.data());
        assert_eq!(pair_distance(&first, &first).unwrap(), [0.0]);
    }

    #[test]
    fn train_mode_applies_dropout() {
        let model = tiny(4);
        let batch = random_batch(1, 3);
        let infer = model.embed_infer(&batch).unwrap();
        let a = model.embed(&batch, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = model.embed(&batch, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, infer);
    }

    #[test]
    fn wrong_input_size() {
        let batch = Tensor::<f32>::zeros(&[1, 1, 32, 47]).unwrap();
        assert!(matches!(tiny(0).embed_infer(&batch), Err(Error::Shape { .. })));
    }

    #[test]
    fn distance_examples() {
        let zero = embedding(&[&[0.0, 0.0]]);
        let other = embedding(&[&[3.0, 4.0]]);
        assert_eq!(pair_distance(&zero, &other).unwrap(), [5.0]);
        assert_eq!(pair_distance(&other, &zero).unwrap(), [5.0]);
        assert_eq!(pair_distance(&other, &other).unwrap(), [0.0]);
        let two = embedding(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(pair_distance(&zero, &two).is_err());
    }

    #[test]
    fn distance_on_tape_matches_and_is_differentiable() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param("a", tensor_from(&[2, 2], [0.0, 0.0, 1.0, 2.0]).unwrap()).unwrap();
        let b = tape.constant(tensor_from(&[2, 2], [3.0, 4.0, 1.0, 2.0]).unwrap());
        let d = pair_distance_on_tape(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(d).data(), [5.0, 0.0]);
        let mask = tape.constant(tensor_from(&[2], [1.0, 0.0]).unwrap());
        let first = tape.mul(d, mask).unwrap();
        let first = tape.sum(first);
        let grads = tape.backward(first).unwrap();
        // d/da of |a - b| at a - b = (-3, -4)
        let g = grads["a"].data();
        assert!((g[0] + 0.6).abs() < 1e-12 && (g[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn shared_weights_move_both_branches() {
        let mut model = tiny(2);
        let (x1, x2) = (random_batch(1, 5), random_batch(1, 6));
        let before = (model.embed_infer(&x1).unwrap(), model.embed_infer(&x2).unwrap());
        for v in model.param_mut("fc2.bias").unwrap().data_mut() {
            *v += 0.25;
        }
        let after = (model.embed_infer(&x1).unwrap(), model.embed_infer(&x2).unwrap());
        assert_ne!(before.0, after.0);
        assert_ne!(before.1, after.1);

        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v1 = tape.constant(x1.clone());
        let v2 = tape.constant(x1);
        let e1 = model.forward(&mut tape, &bound, v1, Mode::Infer, &mut rng).unwrap();
        let e2 = model.forward(&mut tape, &bound, v2, Mode::Infer, &mut rng).unwrap();
        assert_eq!(tape.value(e1), tape.value(e2));
        assert_eq!(tape.value(e1), &after.0.vector);
    }
}
