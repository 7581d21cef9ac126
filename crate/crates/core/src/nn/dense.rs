use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::tape::{rank2, Op, Tape, Var};
use crate::tensor::Tensor;

type Grads<T> = (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>);

pub(crate) fn dense_backward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, grad: &[T], needs: [bool; 3]) -> Grads<T> {
    let (n, d, u) = (x.shape()[0], x.shape()[1], w.shape()[1]);
    let gx = needs[0].then(|| {
        let mut gx = vec![T::zero(); n * d];
        linalg::gemm_nt(grad, w.data(), &mut gx, n, u, d);
        gx
    });
    let gw = needs[1].then(|| {
        let mut gw = vec![T::zero(); d * u];
        linalg::gemm_tn(x.data(), grad, &mut gw, d, n, u);
        gw
    });
    let gb = needs[2].then(|| {
        let mut gb = vec![T::zero(); u];
        for row in grad.chunks(u) {
            gb.iter_mut().zip(row).for_each(|(a, &g)| *a = *a + g);
        }
        gb
    });
    (gx, gw, gb)
}

impl<T: Scalar> Tape<T> {
    /// `x[N,D] · w[D,U] + b[U]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let [n, d] = rank2("dense", xv)?;
        let [d2, u] = rank2("dense", wv)?;
        if d != d2 || bv.shape() != [u] {
            return Err(Error::shape(
                "dense",
                format!("input {:?}, weights {:?}, bias {:?}", xv.shape(), wv.shape(), bv.shape()),
            ));
        }
        let mut out = vec![T::zero(); n * u];
        linalg::gemm_nn(xv.data(), wv.data(), &mut out, n, d, u);
        for row in out.chunks_mut(u) {
            row.iter_mut().zip(bv.data()).for_each(|(o, &b)| *o = *o + b);
        }
        Ok(self.push(Tensor::from_parts(vec![n, u], out), Op::Dense { x, w, b }))
    }

    /// Rectified linear unit; the subgradient at zero is zero.
    pub fn relu(&mut self, x: Var) -> Var {
        self.max_with_scalar(x, T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tensor_from;

    #[test]
    fn identity_weights() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(tensor_from(&[2, 3], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let eye = tensor_from(&[3, 3], [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let w = tape.constant(eye);
        let b = tape.constant(Tensor::zeros(&[3]).unwrap());
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn affine_value() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(tensor_from(&[1, 2], [1.0, 2.0]).unwrap());
        let w = tape.constant(tensor_from(&[2, 1], [1.0, 1.0]).unwrap());
        let b = tape.constant(tensor_from(&[1], [1.0]).unwrap());
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
        let bad = tape.constant(Tensor::zeros(&[3, 1]).unwrap());
        assert!(tape.dense(x, bad, b).is_err());
    }

    #[test]
    fn relu_values_and_subgradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param("x", tensor_from(&[4], [-1.0, 0.0, 2.0, 3.0]).unwrap()).unwrap();
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0, 3.0]);
        let l = tape.sum(y);
        assert_eq!(tape.backward(l).unwrap()["x"].data(), &[0.0, 0.0, 1.0, 1.0]);
        let nan = tape.constant(tensor_from(&[1], [f64::NAN]).unwrap());
        let out = tape.relu(nan);
        assert!(tape.value(out).data()[0].is_nan());
    }
}
