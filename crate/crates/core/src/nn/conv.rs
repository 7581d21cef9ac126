//! 2-D cross-correlation via im2col.

use rayon::prelude::*;

use super::Conv2dParams;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

/// Samples handled per worker task in the backward pass. Fixed so the
/// weight-gradient reduction order does not depend on the thread count.
const BACKWARD_CHUNK: usize = 4;

/// `(size + 2·pad − kernel) / stride + 1`, or `None` if the kernel does not fit.
pub(crate) fn conv_output_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (stride > 0 && kernel > 0 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<Self> {
        let &[n, c, h, wd] = x.shape() else {
            return Err(Error::shape("conv2d", format!("input must be [N,C,H,W], got {:?}", x.shape())));
        };
        let &[oc, ic, kh, kw] = w.shape() else {
            return Err(Error::shape("conv2d", format!("weights must be rank 4, got {:?}", w.shape())));
        };
        if ic != c {
            return Err(Error::shape("conv2d", format!("input has {c} channels, weights expect {ic}")));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        if pad >= kh.max(kw) {
            return Err(Error::InvalidArgument(format!(
                "conv2d pad {pad} must be smaller than the kernel ({kh}x{kw})"
            )));
        }
        let (Some(oh), Some(ow)) = (conv_output_size(h, kh, stride, pad), conv_output_size(wd, kw, stride, pad)) else {
            return Err(Error::shape(
                "conv2d",
                format!("{h}x{wd} input (pad {pad}) is smaller than the {kh}x{kw} kernel"),
            ));
        };
        Ok(Geometry { n, c, h, w: wd, oc, kh, kw, stride, pad, oh, ow })
    }

    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Source pixel for output column `o` and kernel offset `kk` along one axis.
    fn src(&self, o: usize, kk: usize, size: usize) -> Option<usize> {
        (o * self.stride + kk).checked_sub(self.pad).filter(|&i| i < size)
    }

    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let p = self.p();
        for ic in 0..self.c {
            let plane = &x[ic * self.h * self.w..(ic + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let k = (ic * self.kh + ki) * self.kw + kj;
                    let row = &mut col[k * p..(k + 1) * p];
                    for oi in 0..self.oh {
                        let dst = &mut row[oi * self.ow..(oi + 1) * self.ow];
                        match self.src(oi, ki, self.h) {
                            None => dst.fill(T::zero()),
                            Some(si) => {
                                let src_row = &plane[si * self.w..(si + 1) * self.w];
                                for (oj, d) in dst.iter_mut().enumerate() {
                                    *d = match self.src(oj, kj, self.w) {
                                        Some(sj) => src_row[sj],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, col: &[T], x: &mut [T]) {
        let p = self.p();
        for ic in 0..self.c {
            let plane = &mut x[ic * self.h * self.w..(ic + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let k = (ic * self.kh + ki) * self.kw + kj;
                    let row = &col[k * p..(k + 1) * p];
                    for oi in 0..self.oh {
                        let Some(si) = self.src(oi, ki, self.h) else { continue };
                        for oj in 0..self.ow {
                            if let Some(sj) = self.src(oj, kj, self.w) {
                                let d = &mut plane[si * self.w + sj];
                                *d = *d + row[oi * self.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x, w, stride, pad)?;
    if b.shape() != [g.oc] {
        return Err(Error::shape("conv2d", format!("bias must be [{}], got {:?}", g.oc, b.shape())));
    }
    let (k, p) = (g.k(), g.p());
    let mut out = vec![T::zero(); g.n * g.oc * p];
    out.par_chunks_mut(g.oc * p).zip(x.data().par_chunks(g.in_len())).for_each(|(out_n, x_n)| {
        let mut col = vec![T::zero(); k * p];
        g.im2col(x_n, &mut col);
        linalg::gemm_nn(w.data(), &col, out_n, g.oc, k, p);
        for (row, &bias) in out_n.chunks_mut(p).zip(b.data()) {
            row.iter_mut().for_each(|v| *v = *v + bias);
        }
    });
    Ok(Tensor::from_parts(vec![g.n, g.oc, g.oh, g.ow], out))
}

type Grads<T> = (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>);

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad: &[T],
    stride: usize,
    pad: usize,
    needs: [bool; 3],
) -> Grads<T> {
    let g = Geometry::new(x, w, stride, pad).expect("geometry validated in forward");
    let (k, p) = (g.k(), g.p());
    let [need_x, need_w, need_b] = needs;

    let gb = need_b.then(|| {
        let mut gb = vec![T::zero(); g.oc];
        for grad_n in grad.chunks(g.oc * p) {
            for (acc, row) in gb.iter_mut().zip(grad_n.chunks(p)) {
                *acc = *acc + row.iter().copied().sum();
            }
        }
        gb
    });

    if !need_x && !need_w {
        return (None, None, gb);
    }

    // gx is allocated even when unused so the chunk zip stays aligned.
    let mut gx = vec![T::zero(); x.numel()];
    let x_chunk = g.in_len() * BACKWARD_CHUNK;
    let g_chunk = g.oc * p * BACKWARD_CHUNK;
    let partial_w: Vec<Vec<T>> = grad
        .par_chunks(g_chunk)
        .zip(x.data().par_chunks(x_chunk))
        .zip(gx.par_chunks_mut(x_chunk))
        .map(|((grad_c, x_c), gx_c)| {
            let mut gw = vec![T::zero(); if need_w { g.oc * k } else { 0 }];
            let mut col = vec![T::zero(); k * p];
            let mut dcol = vec![T::zero(); if need_x { k * p } else { 0 }];
            let samples = grad_c.chunks(g.oc * p).zip(x_c.chunks(g.in_len()));
            for ((grad_n, x_n), gx_n) in samples.zip(gx_c.chunks_mut(g.in_len())) {
                if need_w {
                    g.im2col(x_n, &mut col);
                    linalg::gemm_nt(grad_n, &col, &mut gw, g.oc, p, k);
                }
                if need_x {
                    dcol.fill(T::zero());
                    linalg::gemm_tn(w.data(), grad_n, &mut dcol, k, g.oc, p);
                    g.col2im(&dcol, gx_n);
                }
            }
            gw
        })
        .collect();

    let gw = need_w.then(|| {
        let mut total = vec![T::zero(); g.oc * k];
        for part in &partial_w {
            total.iter_mut().zip(part).for_each(|(t, &v)| *t = *t + v);
        }
        total
    });
    (need_x.then_some(gx), gw, gb)
}

/// Direct six-loop convolution. Accumulates in the same order as the
/// im2col path and is kept as an independent check of it.
pub fn conv2d_reference<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x, w, stride, pad)?;
    let mut out = Vec::with_capacity(g.n * g.oc * g.p());
    for n in 0..g.n {
        for o in 0..g.oc {
            for oi in 0..g.oh {
                for oj in 0..g.ow {
                    let mut acc = T::zero();
                    for c in 0..g.c {
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let wv = w.data()[((o * g.c + c) * g.kh + ki) * g.kw + kj];
                                let si = (oi * stride + ki) as isize - pad as isize;
                                let sj = (oj * stride + kj) as isize - pad as isize;
                                let xv = if si < 0 || sj < 0 || si as usize >= g.h || sj as usize >= g.w {
                                    T::zero()
                                } else {
                                    x.data()[((n * g.c + c) * g.h + si as usize) * g.w + sj as usize]
                                };
                                acc = acc + wv * xv;
                            }
                        }
                    }
                    out.push(acc + b.data()[o]);
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.n, g.oc, g.oh, g.ow], out))
}

impl<T: Scalar> Tape<T> {
    /// Convolution with stride and zero padding, no kernel flip.
    /// Output spatial size is `(H + 2·pad − kH) / stride + 1`.
    pub fn conv2d(&mut self, x: Var, params: &Conv2dParams) -> Result<Var> {
        let out = conv2d_forward(
            self.value(x),
            self.value(params.weights),
            self.value(params.bias),
            params.stride,
            params.pad,
        )?;
        Ok(self.push(out, Op::Conv2d { x, w: params.weights, b: params.bias, stride: params.stride, pad: params.pad }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tensor_from;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f32> {
        let n = shape.iter().product();
        tensor_from(shape, (0..n).map(|_| rng.random_range(-1.0f32..1.0))).unwrap()
    }

    #[test]
    fn counts_ones_with_padding() {
        let x = Tensor::<f64>::ones(&[1, 1, 5, 5]).unwrap();
        let w = Tensor::<f64>::ones(&[1, 1, 3, 3]).unwrap();
        let b = Tensor::<f64>::zeros(&[1]).unwrap();
        let y = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        assert_eq!(y.at(&[0, 0, 2, 2]).unwrap(), 9.0);
        assert_eq!(y.at(&[0, 0, 0, 0]).unwrap(), 4.0);
        assert_eq!(y.at(&[0, 0, 4, 4]).unwrap(), 4.0);
        assert_eq!(y.at(&[0, 0, 0, 2]).unwrap(), 6.0);
    }

    #[test]
    fn first_layer_output_size() {
        assert_eq!(conv_output_size(155, 11, 1, 0), Some(145));
        assert_eq!(conv_output_size(220, 11, 1, 0), Some(210));
        assert_eq!(conv_output_size(4, 5, 1, 0), None);
    }

    #[test]
    fn matches_six_loop_reference_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(stride, pad) in &[(1, 0), (1, 1), (2, 1), (2, 0)] {
            let x = random(&[1, 3, 8, 8], &mut rng);
            let w = random(&[4, 3, 3, 3], &mut rng);
            let b = random(&[4], &mut rng);
            let fast = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
            let slow = conv2d_reference(&x, &w, &b, stride, pad).unwrap();
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_operands() {
        let x = Tensor::<f32>::ones(&[1, 2, 5, 5]).unwrap();
        let w = Tensor::<f32>::ones(&[1, 3, 3, 3]).unwrap();
        let b = Tensor::<f32>::zeros(&[1]).unwrap();
        assert!(conv2d_forward(&x, &w, &b, 1, 0).is_err());

        let small = Tensor::<f32>::ones(&[1, 3, 2, 2]).unwrap();
        assert!(conv2d_forward(&small, &w, &b, 1, 0).is_err());
        assert!(conv2d_forward(&small, &w, &b, 1, 3).is_err());
    }
}
