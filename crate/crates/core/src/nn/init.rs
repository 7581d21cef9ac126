use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `sqrt(6 / (fan_in + fan_out))` for a dense `[in, out]` or convolution
/// `[out, in, kh, kw]` weight shape.
pub fn glorot_bound(shape: &[usize]) -> Result<f64> {
    let (fan_in, fan_out) = match *shape {
        [fan_in, fan_out] => (fan_in, fan_out),
        [out, inp, kh, kw] => (inp * kh * kw, out * kh * kw),
        _ => return Err(Error::InvalidArgument(format!("Glorot init needs a rank 2 or 4 shape, got {shape:?}"))),
    };
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// Uniform Glorot initialization in `[−L, L]`.
pub fn glorot_init<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<T>> {
    let bound = glorot_bound(shape)?;
    let dist = Uniform::new_inclusive(-bound, bound).expect("bound is finite and positive");
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), dist.sample_iter(rng).take(n).map(T::cast).collect())
}
