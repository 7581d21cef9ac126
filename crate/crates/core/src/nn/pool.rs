use super::PoolSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

/// `(size − window) / stride + 1`, no padding, floor rounding.
pub(crate) fn pool_output_size(size: usize, window: usize, stride: usize) -> Option<usize> {
    (stride > 0 && window > 0 && window <= size).then(|| (size - window) / stride + 1)
}

fn maxpool2d_forward<T: Scalar>(x: &Tensor<T>, spec: &PoolSpec) -> Result<(Tensor<T>, Vec<usize>)> {
    let &[n, c, h, w] = x.shape() else {
        return Err(Error::shape("maxpool2d", format!("input must be [N,C,H,W], got {:?}", x.shape())));
    };
    let (kh, kw) = spec.window;
    let (Some(oh), Some(ow)) = (pool_output_size(h, kh, spec.stride), pool_output_size(w, kw, spec.stride)) else {
        return Err(Error::shape(
            "maxpool2d",
            format!("{kh}x{kw} window (stride {}) does not fit {h}x{w}", spec.stride),
        ));
    };
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oi in 0..oh {
            for oj in 0..ow {
                let (i0, j0) = (oi * spec.stride, oj * spec.stride);
                let mut best = base + i0 * w + j0;
                for i in i0..i0 + kh {
                    for j in j0..j0 + kw {
                        let idx = base + i * w + j;
                        // Strict comparison keeps the first maximum on ties;
                        // a NaN wins so that divergence is not masked.
                        if data[idx] > data[best] || (data[idx].is_nan() && !data[best].is_nan()) {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_parts(vec![n, c, oh, ow], out), argmax))
}

pub(crate) fn maxpool2d_backward<T: Scalar>(input_len: usize, argmax: &[usize], grad: &[T]) -> Vec<T> {
    let mut gx = vec![T::zero(); input_len];
    for (&idx, &g) in argmax.iter().zip(grad) {
        gx[idx] = gx[idx] + g;
    }
    gx
}

impl<T: Scalar> Tape<T> {
    /// Max pooling without padding. Gradient flows only to the first
    /// maximal element of each window.
    pub fn maxpool2d(&mut self, x: Var, spec: &PoolSpec) -> Result<Var> {
        let (out, argmax) = maxpool2d_forward(self.value(x), spec)?;
        Ok(self.push(out, Op::MaxPool { x, argmax }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tensor_from;

    const WIN2: PoolSpec = PoolSpec { window: (2, 2), stride: 2 };

    #[test]
    fn picks_maximum() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(tensor_from(&[1, 1, 2, 2], [1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = tape.maxpool2d(x, &WIN2).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
    }

    #[test]
    fn table_one_first_pool_shape() {
        assert_eq!(pool_output_size(145, 3, 2), Some(72));
        assert_eq!(pool_output_size(210, 3, 2), Some(104));
    }

    #[test]
    fn ties_route_to_one_cell() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param("x", tensor_from(&[1, 1, 2, 2], [5.0; 4]).unwrap()).unwrap();
        let y = tape.maxpool2d(x, &WIN2).unwrap();
        let l = tape.sum(y);
        let g = tape.backward(l).unwrap();
        assert_eq!(g["x"].data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn nan_propagates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(tensor_from(&[1, 1, 2, 2], [1.0, f64::NAN, 3.0, 4.0]).unwrap());
        let y = tape.maxpool2d(x, &WIN2).unwrap();
        assert!(tape.value(y).data()[0].is_nan());
    }

    #[test]
    fn oversized_window() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[1, 1, 2, 2]).unwrap());
        let spec = PoolSpec { window: (3, 3), stride: 1 };
        assert!(tape.maxpool2d(x, &spec).is_err());
    }
}
