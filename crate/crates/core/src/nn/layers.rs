//! Layers with hand-derived backward passes. Each `forward` is pure; the
//! `backward` functions consume whatever cache the forward produced.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{s, Scalar, Tensor2};

/// Frame-wise affine map (equivalently a 1x1 temporal convolution):
/// `y = x . w + b` with `w: (d_in x d_out)`, `b: (1 x d_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub w: Tensor2<S>,
    pub b: Tensor2<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            w: Tensor2::zeros(d_in, d_out),
            b: Tensor2::zeros(1, d_out),
        }
    }

    /// He-normal weights (std sqrt(2 / d_in)), zero biases, optionally
    /// scaled down for output heads.
    pub fn he_init(d_in: usize, d_out: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let std = (2.0 / d_in as f64).sqrt() * scale;
        let normal = Normal::new(0.0, std).expect("valid std");
        let mut w = Tensor2::zeros(d_in, d_out);
        for v in w.data_mut() {
            *v = s(normal.sample(rng));
        }
        Linear {
            w,
            b: Tensor2::zeros(1, d_out),
        }
    }

    pub fn forward(&self, x: &Tensor2<S>) -> Tensor2<S> {
        let mut y = x.matmul(&self.w);
        for r in 0..y.rows() {
            for (o, &b) in y.row_mut(r).iter_mut().zip(self.b.row(0).iter()) {
                *o = *o + b;
            }
        }
        y
    }

    /// Returns `(dx, dw, db)` for upstream gradient `dy`.
    pub fn backward(
        &self,
        x: &Tensor2<S>,
        dy: &Tensor2<S>,
    ) -> (Tensor2<S>, Tensor2<S>, Tensor2<S>) {
        let dx = dy.matmul_nt(&self.w);
        let dw = x.matmul_tn(dy);
        let db = dy.col_sums();
        (dx, dw, db)
    }
}

pub fn relu<S: Scalar>(x: &Tensor2<S>) -> Tensor2<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// `dy` masked by the sign of the pre-activation `x`.
pub fn relu_backward<S: Scalar>(x: &Tensor2<S>, dy: &Tensor2<S>) -> Tensor2<S> {
    x.zip_map(dy, |xv, dv| if xv > S::zero() { dv } else { S::zero() })
}

/// Numerically stable logistic function, split on the argument sign so the
/// exponential never overflows.
#[inline]
pub fn sigmoid_scalar<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

pub fn sigmoid<S: Scalar>(z: &Tensor2<S>) -> Tensor2<S> {
    z.map(sigmoid_scalar)
}

/// `dy` through the logistic: `dz = dy * p * (1 - p)` with `p = sigmoid(z)`.
pub fn sigmoid_backward<S: Scalar>(p: &Tensor2<S>, dy: &Tensor2<S>) -> Tensor2<S> {
    p.zip_map(dy, |pv, dv| dv * pv * (S::one() - pv))
}

/// Dilated temporal convolution with kernel size 3 and zero padding that
/// preserves length: `y[t] = b + sum_j x[t + (j-1)*dilation] . w[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedConv1d<S> {
    /// Taps for offsets -dilation, 0, +dilation; each `(c_in x c_out)`.
    pub w: [Tensor2<S>; 3],
    pub b: Tensor2<S>,
    pub dilation: usize,
}

impl<S: Scalar> DilatedConv1d<S> {
    pub fn he_init(c_in: usize, c_out: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        // Fan-in counts all three taps.
        let std = (2.0 / (3.0 * c_in as f64)).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let mut mk = || {
            let mut w = Tensor2::zeros(c_in, c_out);
            for v in w.data_mut() {
                *v = s(normal.sample(rng));
            }
            w
        };
        DilatedConv1d {
            w: [mk(), mk(), mk()],
            b: Tensor2::zeros(1, c_out),
            dilation,
        }
    }

    pub fn forward(&self, x: &Tensor2<S>) -> Tensor2<S> {
        let t_len = x.rows();
        let c_out = self.w[0].cols();
        let d = self.dilation as isize;
        let mut y = Tensor2::zeros(t_len, c_out);
        for r in 0..t_len {
            let out = y.row_mut(r);
            out.copy_from_slice(self.b.row(0));
        }
        for (j, w) in self.w.iter().enumerate() {
            let offset = (j as isize - 1) * d;
            for t in 0..t_len as isize {
                let src = t + offset;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let x_row = x.row(src as usize);
                let base = t as usize * c_out;
                for (c_in_idx, &xv) in x_row.iter().enumerate() {
                    if xv == S::zero() {
                        continue;
                    }
                    let w_row = w.row(c_in_idx);
                    for (o, &wv) in y.data_mut()[base..base + c_out].iter_mut().zip(w_row.iter()) {
                        *o = *o + xv * wv;
                    }
                }
            }
        }
        y
    }

    /// Returns `(dx, dw, db)`.
    pub fn backward(
        &self,
        x: &Tensor2<S>,
        dy: &Tensor2<S>,
    ) -> (Tensor2<S>, [Tensor2<S>; 3], Tensor2<S>) {
        let t_len = x.rows();
        let c_in = x.cols();
        let c_out = dy.cols();
        let d = self.dilation as isize;
        let mut dx = Tensor2::zeros(t_len, c_in);
        let mut dw = [
            Tensor2::zeros(c_in, c_out),
            Tensor2::zeros(c_in, c_out),
            Tensor2::zeros(c_in, c_out),
        ];
        let db = dy.col_sums();
        for j in 0..3 {
            let offset = (j as isize - 1) * d;
            let w = &self.w[j];
            for t in 0..t_len as isize {
                let src = t + offset;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let dy_row = dy.row(t as usize);
                let x_row = x.row(src as usize);
                // dx[src] += dy[t] . w^T
                let dx_row = dx.row_mut(src as usize);
                for (c, dxv) in dx_row.iter_mut().enumerate() {
                    let w_row = w.row(c);
                    let mut acc = S::zero();
                    for (&dv, &wv) in dy_row.iter().zip(w_row.iter()) {
                        acc = acc + dv * wv;
                    }
                    *dxv = *dxv + acc;
                }
                // dw[j] += x[src]^T outer dy[t]
                for (c, &xv) in x_row.iter().enumerate() {
                    if xv == S::zero() {
                        continue;
                    }
                    let dw_row = dw[j].row_mut(c);
                    for (o, &dv) in dw_row.iter_mut().zip(dy_row.iter()) {
                        *o = *o + xv * dv;
                    }
                }
            }
        }
        (dx, dw, db)
    }
}

/// Inverted dropout: kept units are scaled by `1/(1-rate)` during training
/// so evaluation is the identity. Returns the output and the keep mask.
pub fn dropout_forward<S: Scalar>(
    x: &Tensor2<S>,
    rate: f64,
    rng: &mut impl Rng,
) -> (Tensor2<S>, Vec<bool>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if rate == 0.0 {
        return (x.clone(), vec![true; x.len()]);
    }
    let keep_scale: S = s(1.0 / (1.0 - rate));
    let mask: Vec<bool> = (0..x.len()).map(|_| rng.gen::<f64>() >= rate).collect();
    let mut out = x.clone();
    for (v, &keep) in out.data_mut().iter_mut().zip(mask.iter()) {
        *v = if keep { *v * keep_scale } else { S::zero() };
    }
    (out, mask)
}

pub fn dropout_backward<S: Scalar>(dy: &Tensor2<S>, mask: &[bool], rate: f64) -> Tensor2<S> {
    if rate == 0.0 {
        return dy.clone();
    }
    let keep_scale: S = s(1.0 / (1.0 - rate));
    let mut out = dy.clone();
    for (v, &keep) in out.data_mut().iter_mut().zip(mask.iter()) {
        *v = if keep { *v * keep_scale } else { S::zero() };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_forward_hand_example() {
        // x = [[1, 0]], w = [[2, 3], [4, 5]], b = [1, 1] -> y = [[3, 4]]
        let lin = Linear {
            w: Tensor2::from_rows(&[vec![2.0f64, 3.0], vec![4.0, 5.0]]),
            b: Tensor2::from_rows(&[vec![1.0, 1.0]]),
        };
        let x = Tensor2::from_rows(&[vec![1.0, 0.0]]);
        assert_eq!(lin.forward(&x).data(), &[3.0, 4.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid_scalar(1000.0f64), 1.0);
        assert_eq!(sigmoid_scalar(-1000.0f64), 0.0);
        assert!((sigmoid_scalar(0.0f64) - 0.5).abs() < 1e-15);
        let near = sigmoid_scalar(-30.0f64);
        assert!(near > 0.0 && near < 1e-12);
    }

    #[test]
    fn conv_forward_identity_kernel_shifts() {
        // Center tap identity, side taps zero: y == x (away from edges too).
        let conv = DilatedConv1d {
            w: [
                Tensor2::zeros(1, 1),
                Tensor2::from_rows(&[vec![1.0f64]]),
                Tensor2::zeros(1, 1),
            ],
            b: Tensor2::zeros(1, 1),
            dilation: 2,
        };
        let x = Tensor2::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        assert_eq!(conv.forward(&x), x);
        // Left tap only with dilation 2: y[t] = x[t-2].
        let conv2 = DilatedConv1d {
            w: [
                Tensor2::from_rows(&[vec![1.0f64]]),
                Tensor2::zeros(1, 1),
                Tensor2::zeros(1, 1),
            ],
            b: Tensor2::zeros(1, 1),
            dilation: 2,
        };
        assert_eq!(
            conv2.forward(&x).data(),
            &[0.0, 0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let report = gradcheck::check_linear(&mut rng, 5, 3, 4);
        assert!(report < 1e-6, "max rel err {report}");
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        // T=7, C=3, dilation 2 as the reference miniature.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let report = gradcheck::check_conv(&mut rng, 7, 3, 2, 2);
        assert!(report < 1e-6, "max rel err {report}");
    }

    #[test]
    fn dropout_scales_and_masks() {
        let x = Tensor2::from_flat(1, 1000, vec![1.0f64; 1000]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (y, mask) = dropout_forward(&x, 0.5, &mut rng);
        let kept = mask.iter().filter(|&&k| k).count();
        assert!(kept > 400 && kept < 600, "kept {kept}");
        for (v, &k) in y.data().iter().zip(mask.iter()) {
            assert_eq!(*v, if k { 2.0 } else { 0.0 });
        }
        // Same seed, same mask.
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let (_, mask2) = dropout_forward(&x, 0.5, &mut rng2);
        assert_eq!(mask, mask2);
        // Rate 0 is the identity.
        let mut rng3 = ChaCha8Rng::seed_from_u64(3);
        let (y0, _) = dropout_forward(&x, 0.0, &mut rng3);
        assert_eq!(y0, x);
    }
}
