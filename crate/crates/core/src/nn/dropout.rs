use rand::Rng;

use super::{DropoutSpec, Mode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape, Var};

impl<T: Scalar> Tape<T> {
    /// Inverted dropout: in training each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 − rate)`.
    /// Inference returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, spec: &DropoutSpec, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&spec.rate) {
            return Err(Error::InvalidArgument(format!("dropout rate must lie in [0, 1), got {}", spec.rate)));
        }
        if spec.mode == Mode::Infer || spec.rate == 0.0 {
            return Ok(x);
        }
        let keep = T::cast(1.0 / (1.0 - spec.rate));
        let input = self.value(x);
        let mask: Vec<T> =
            (0..input.numel()).map(|_| if rng.random::<f64>() < spec.rate { T::zero() } else { keep }).collect();
        let out = input.like(input.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect());
        Ok(self.push(out, Op::Dropout { x, mask }))
    }
}
