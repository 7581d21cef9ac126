use super::LrnParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

fn window(c: usize, channels: usize, n: usize) -> std::ops::RangeInclusive<usize> {
    let half = n / 2;
    c.saturating_sub(half)..=(c + half).min(channels - 1)
}

/// Returns the output and the per-element denominator base `k + α·Σa²`.
fn lrn_forward<T: Scalar>(x: &Tensor<T>, p: &LrnParams) -> Result<(Tensor<T>, Vec<T>)> {
    let &[_, c, h, w] = x.shape() else {
        return Err(Error::shape("lrn", format!("input must be [N,C,H,W], got {:?}", x.shape())));
    };
    let (alpha, k, beta) = (T::cast(p.alpha), T::cast(p.k), T::cast(p.beta));
    let hw = h * w;
    let mut scale = vec![T::zero(); x.numel()];
    let mut out = vec![T::zero(); x.numel()];
    for ((xs, ss), os) in x.data().chunks(c * hw).zip(scale.chunks_mut(c * hw)).zip(out.chunks_mut(c * hw)) {
        let sq: Vec<T> = xs.iter().map(|&v| v * v).collect();
        for ch in 0..c {
            let s = &mut ss[ch * hw..(ch + 1) * hw];
            s.fill(T::zero());
            for j in window(ch, c, p.n) {
                for (acc, &q) in s.iter_mut().zip(&sq[j * hw..(j + 1) * hw]) {
                    *acc = *acc + q;
                }
            }
            for ((sv, ov), &xv) in s.iter_mut().zip(&mut os[ch * hw..(ch + 1) * hw]).zip(&xs[ch * hw..]) {
                *sv = k + alpha * *sv;
                *ov = xv * sv.powf(-beta);
            }
        }
    }
    Ok((x.like(out), scale))
}

/// `∂L/∂a_i = g_i·s_i^−β − 2αβ·a_i·Σ_{c∋i} g_c·a_c·s_c^(−β−1)`
pub(crate) fn lrn_backward<T: Scalar>(x: &Tensor<T>, p: &LrnParams, scale: &[T], grad: &[T]) -> Vec<T> {
    let &[_, c, h, w] = x.shape() else { unreachable!("validated in forward") };
    let (alpha, beta) = (T::cast(p.alpha), T::cast(p.beta));
    let coef = T::cast(2.0) * alpha * beta;
    let hw = h * w;
    let mut gx = vec![T::zero(); x.numel()];
    let block = c * hw;
    for (((xs, ss), gs), out) in
        x.data().chunks(block).zip(scale.chunks(block)).zip(grad.chunks(block)).zip(gx.chunks_mut(block))
    {
        let t: Vec<T> = xs.iter().zip(ss).zip(gs).map(|((&a, &s), &g)| g * a * s.powf(-beta - T::one())).collect();
        for ch in 0..c {
            let o = &mut out[ch * hw..(ch + 1) * hw];
            for j in window(ch, c, p.n) {
                for (acc, &tv) in o.iter_mut().zip(&t[j * hw..(j + 1) * hw]) {
                    *acc = *acc + tv;
                }
            }
            let range = ch * hw..(ch + 1) * hw;
            for (((ov, &a), &s), &g) in o.iter_mut().zip(&xs[range.clone()]).zip(&ss[range.clone()]).zip(&gs[range]) {
                *ov = g * s.powf(-beta) - coef * a * *ov;
            }
        }
    }
    gx
}

impl<T: Scalar> Tape<T> {
    pub fn lrn(&mut self, x: Var, params: &LrnParams) -> Result<Var> {
        if params.n == 0 || params.alpha <= 0.0 || params.beta <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid LRN parameters {params:?}")));
        }
        let (out, scale) = lrn_forward(self.value(x), params)?;
        Ok(self.push(out, Op::Lrn { x, params: *params, scale }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tensor_from;
    use proptest::prelude::*;

    #[test]
    fn zero_in_zero_out() {
        let x = Tensor::<f64>::zeros(&[1, 6, 3, 3]).unwrap();
        let (y, _) = lrn_forward(&x, &LrnParams::default()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_channel_value() {
        let x = tensor_from(&[1, 1, 1, 1], [1.0f64]).unwrap();
        let (y, _) = lrn_forward(&x, &LrnParams::default()).unwrap();
        let want = 1.0 / (2.0f64 + 1e-4).powf(0.75);
        assert!((y.data()[0] - want).abs() < 1e-15);
        assert!((y.data()[0] - 0.594581).abs() < 1e-6);
    }

    #[test]
    fn window_clips_at_edges() {
        assert_eq!(window(0, 8, 5), 0..=2);
        assert_eq!(window(4, 8, 5), 2..=6);
        assert_eq!(window(7, 8, 5), 5..=7);
    }

    proptest! {
        #[test]
        fn never_amplifies_when_k_at_least_one(
            vals in proptest::collection::vec(-50.0f64..50.0, 12),
            k in 1.0f64..4.0,
        ) {
            let x = tensor_from(&[1, 3, 2, 2], vals).unwrap();
            let p = LrnParams { k, ..LrnParams::default() };
            let (y, _) = lrn_forward(&x, &p).unwrap();
            for (a, b) in x.data().iter().zip(y.data()) {
                prop_assert!(b.abs() <= a.abs());
            }
        }
    }
}
