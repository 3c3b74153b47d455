use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::real::Real;

/// Added to the norm so zero vectors normalize to zero instead of NaN.
pub const L2_EPS: f64 = 1e-12;

pub fn logsumexp<T: Real>(xs: &[T]) -> T {
    let mx = xs.iter().copied().fold(xs[0], T::max);
    let s = xs.iter().map(|&x| (x - mx).exp()).sum::<T>();
    mx + s.ln()
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let mx = logits.iter().copied().fold(logits[0], T::max);
    let e: Vec<T> = logits.iter().map(|&x| (x - mx).exp()).collect();
    let s = e.iter().copied().sum::<T>();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let lse = logsumexp(logits);
    logits.iter().map(|&x| x - lse).collect()
}

/// Cross-entropy against `(1-ε)·onehot + ε/C`. Returns the loss and its
/// gradient with respect to the logits.
pub fn cross_entropy_smoothed<T: Real>(logits: &[T], label: usize, smoothing: f64) -> Result<(T, Vec<T>)> {
    let c = logits.len();
    if label >= c {
        return Err(CoreError::InvalidLabel { label, classes: c });
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(CoreError::InvalidConfig(alloc::format!("label smoothing {smoothing} outside [0, 1)")));
    }
    let off = T::from_f64(smoothing / c as f64);
    let on = T::from_f64(1.0 - smoothing) + off;
    let logp = log_softmax(logits);
    let mut loss = T::ZERO;
    let mut grad = Vec::with_capacity(c);
    for (j, &lp) in logp.iter().enumerate() {
        let t = if j == label { on } else { off };
        if t != T::ZERO {
            loss -= t * lp;
        }
        grad.push(lp.exp() - t);
    }
    Ok((loss, grad))
}

/// `v / (‖v‖ + ε)`; also returns the norm for the backward pass.
pub fn l2_normalize<T: Real>(v: &[T]) -> (Vec<T>, T) {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let denom = norm + T::from_f64(L2_EPS);
    (v.iter().map(|&x| x / denom).collect(), norm)
}

/// Gradient of `l2_normalize` given the original vector and its norm.
pub fn l2_normalize_backward<T: Real>(v: &[T], norm: T, dn: &[T]) -> Vec<T> {
    let denom = norm + T::from_f64(L2_EPS);
    if norm == T::ZERO {
        return dn.iter().map(|&g| g / denom).collect();
    }
    let vd = v.iter().zip(dn).map(|(&a, &b)| a * b).sum::<T>();
    let k = vd / (norm * denom * denom);
    v.iter().zip(dn).map(|(&x, &g)| g / denom - k * x).collect()
}
