//! Masked binary cross-entropy. Training always goes through the fused
//! from-logits entry point; the probability entry exists as a slow reference.

use super::layers::sigmoid_scalar;
use super::tensor::{s, Scalar, Tensor2};

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus<S: Scalar>(z: S) -> S {
    let zero = S::zero();
    let m = if z > zero { z } else { zero };
    m + ((z - m).exp() + (-m).exp()).ln()
}

/// Sum of element-wise BCE over unmasked entries plus the raw gradient of
/// that sum with respect to the logits (`p - y` on valid entries, zero on
/// masked ones), plus the number of valid entries.
///
/// Targets may be soft (probabilities in `[0, 1]`).
pub fn masked_bce_sum_from_logits<S: Scalar>(
    logits: &Tensor2<S>,
    targets: &Tensor2<S>,
    mask: &[bool],
) -> (S, Tensor2<S>, usize) {
    assert_eq!(logits.rows(), targets.rows(), "logits/targets row mismatch");
    assert_eq!(logits.cols(), targets.cols(), "logits/targets col mismatch");
    assert_eq!(logits.len(), mask.len(), "mask length mismatch");
    let mut grad = Tensor2::zeros(logits.rows(), logits.cols());
    let mut sum = S::zero();
    let mut n_valid = 0usize;
    for (i, (&z, &y)) in logits.data().iter().zip(targets.data().iter()).enumerate() {
        if !mask[i] {
            continue;
        }
        n_valid += 1;
        // BCE(z, y) = y*softplus(-z) + (1-y)*softplus(z)
        sum = sum + y * softplus(-z) + (S::one() - y) * softplus(z);
        grad.data_mut()[i] = sigmoid_scalar(z) - y;
    }
    (sum, grad, n_valid)
}

/// Mean masked BCE and its gradient `(p - y) / n_valid`. A fully masked
/// input contributes zero loss and zero gradient.
pub fn masked_bce_from_logits<S: Scalar>(
    logits: &Tensor2<S>,
    targets: &Tensor2<S>,
    mask: &[bool],
) -> (S, Tensor2<S>) {
    let (sum, mut grad, n_valid) = masked_bce_sum_from_logits(logits, targets, mask);
    if n_valid == 0 {
        return (S::zero(), grad);
    }
    let inv = s::<S>(1.0) / s::<S>(n_valid as f64);
    grad.scale(inv);
    (sum * inv, grad)
}

/// Reference implementation straight from probabilities, used to cross-check
/// the fused path in tests. Probabilities are clamped away from {0, 1}.
pub fn masked_bce_from_probs<S: Scalar>(
    probs: &Tensor2<S>,
    targets: &Tensor2<S>,
    mask: &[bool],
) -> S {
    assert_eq!(probs.len(), targets.len());
    assert_eq!(probs.len(), mask.len());
    let eps: S = s(1e-12);
    let mut sum = S::zero();
    let mut n_valid = 0usize;
    for (i, (&p, &y)) in probs.data().iter().zip(targets.data().iter()).enumerate() {
        if !mask[i] {
            continue;
        }
        n_valid += 1;
        let p = p.max(eps).min(S::one() - eps);
        sum = sum - (y * p.ln() + (S::one() - y) * (S::one() - p).ln());
    }
    if n_valid == 0 {
        S::zero()
    } else {
        sum / s(n_valid as f64)
    }
}
