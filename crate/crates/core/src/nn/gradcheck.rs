//! Central finite-difference verification for hand-derived backward passes.
//! Everything here runs in f64; training uses f32 but shares the same code
//! paths through the `Scalar` generic.

use rand::Rng;

use super::layers::{DilatedConv1d, Linear};
use super::tensor::Tensor2;

pub const FD_EPS: f64 = 1e-5;

/// Relative error with a floor so that near-zero gradient pairs compare
/// absolutely instead of blowing up.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Perturbs every entry of every tensor in `params` by +/- eps, evaluates
/// `eval`, and returns the worst relative error against `analytic`.
pub fn fd_check(
    params: &mut Vec<Tensor2<f64>>,
    analytic: &[Tensor2<f64>],
    mut eval: impl FnMut(&[Tensor2<f64>]) -> f64,
    eps: f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "analytic gradient count mismatch");
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        assert_eq!(params[pi].len(), analytic[pi].len(), "analytic shape mismatch");
        for i in 0..params[pi].len() {
            let orig = params[pi].data()[i];
            params[pi].data_mut()[i] = orig + eps;
            let f_plus = eval(&params[..]);
            params[pi].data_mut()[i] = orig - eps;
            let f_minus = eval(&params[..]);
            params[pi].data_mut()[i] = orig;
            let fd = (f_plus - f_minus) / (2.0 * eps);
            worst = worst.max(rel_err(fd, analytic[pi].data()[i]));
        }
    }
    worst
}

pub fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor2<f64> {
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    t
}

/// Checks `Linear` against finite differences through a random linear
/// functional `L = sum(c * forward(x))`, covering dx, dw and db at once.
pub fn check_linear(rng: &mut impl Rng, t: usize, d_in: usize, d_out: usize) -> f64 {
    let x = random_tensor(t, d_in, rng);
    let w = random_tensor(d_in, d_out, rng);
    let b = random_tensor(1, d_out, rng);
    let c = random_tensor(t, d_out, rng);
    let lin = Linear { w: w.clone(), b: b.clone() };
    let (dx, dw, db) = lin.backward(&x, &c);
    let mut params = vec![x, w, b];
    let analytic = [dx, dw, db];
    fd_check(
        &mut params,
        &analytic,
        |ps| {
            let lin = Linear { w: ps[1].clone(), b: ps[2].clone() };
            dot(&lin.forward(&ps[0]), &c)
        },
        FD_EPS,
    )
}

/// Same scheme for the dilated convolution.
pub fn check_conv(rng: &mut impl Rng, t: usize, c_in: usize, c_out: usize, dilation: usize) -> f64 {
    let x = random_tensor(t, c_in, rng);
    let w = [
        random_tensor(c_in, c_out, rng),
        random_tensor(c_in, c_out, rng),
        random_tensor(c_in, c_out, rng),
    ];
    let b = random_tensor(1, c_out, rng);
    let c = random_tensor(t, c_out, rng);
    let conv = DilatedConv1d { w: w.clone(), b: b.clone(), dilation };
    let (dx, dw, db) = conv.backward(&x, &c);
    let mut params = vec![x, w[0].clone(), w[1].clone(), w[2].clone(), b];
    let analytic = [dx, dw[0].clone(), dw[1].clone(), dw[2].clone(), db];
    fd_check(
        &mut params,
        &analytic,
        |ps| {
            let conv = DilatedConv1d {
                w: [ps[1].clone(), ps[2].clone(), ps[3].clone()],
                b: ps[4].clone(),
                dilation,
            };
            dot(&conv.forward(&ps[0]), &c)
        },
        FD_EPS,
    )
}

fn dot(a: &Tensor2<f64>, b: &Tensor2<f64>) -> f64 {
    a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum()
}
