//! Prototype head: temperature-scaled log-sum-exp of cosine similarities
//! between the fused representation and per-class prototype vectors.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{l2_normalize, l2_normalize_backward, logsumexp, softmax};
use crate::real::Real;

/// Prototype bank `classes × per_class × dim` with every row l2-normalized.
#[derive(Debug, Clone)]
pub struct NormalizedBank<T> {
    rows: Vec<T>,
    norms: Vec<T>,
    classes: usize,
    per_class: usize,
    dim: usize,
}

impl<T: Real> NormalizedBank<T> {
    pub fn new(raw: &[T], classes: usize, per_class: usize, dim: usize) -> Self {
        assert_eq!(raw.len(), classes * per_class * dim, "prototype bank size");
        let mut rows = Vec::with_capacity(raw.len());
        let mut norms = Vec::with_capacity(classes * per_class);
        for p in raw.chunks_exact(dim) {
            let (n, norm) = l2_normalize(p);
            rows.extend(n);
            norms.push(norm);
        }
        Self { rows, norms, classes, per_class, dim }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    #[inline]
    pub fn proto(&self, class: usize, k: usize) -> &[T] {
        let i = (class * self.per_class + k) * self.dim;
        &self.rows[i..i + self.dim]
    }

    /// Maps gradients on the normalized rows back onto the raw bank.
    pub fn backward(&self, raw: &[T], dnormalized: &[T], draw: &mut [T]) {
        let d = self.dim;
        for (i, ((p, dn), g)) in raw.chunks_exact(d).zip(dnormalized.chunks_exact(d)).zip(draw.chunks_exact_mut(d)).enumerate() {
            let dp = l2_normalize_backward(p, self.norms[i], dn);
            for (a, b) in g.iter_mut().zip(dp) {
                *a += b;
            }
        }
    }
}

/// Per-sample prototype scores and what their backward pass needs.
#[derive(Debug, Clone)]
pub struct PrototypeScores<T> {
    pub logits: Vec<T>,
    zn: Vec<T>,
    norm: T,
    /// `cos / τ`, laid out `[class][k]`.
    scaled: Vec<T>,
}

pub fn prototype_scores<T: Real>(z: &[T], bank: &NormalizedBank<T>, temperature: f64) -> PrototypeScores<T> {
    let (zn, norm) = l2_normalize(z);
    let inv_tau = T::from_f64(1.0 / temperature);
    let k = bank.per_class;
    let mut scaled = Vec::with_capacity(bank.classes * k);
    let mut logits = Vec::with_capacity(bank.classes);
    for c in 0..bank.classes {
        let start = scaled.len();
        for j in 0..k {
            scaled.push(crate::tensor::dot(&zn, bank.proto(c, j)) * inv_tau);
        }
        logits.push(logsumexp(&scaled[start..]));
    }
    PrototypeScores { logits, zn, norm, scaled }
}

/// Prototype logits for a raw (unnormalized) bank.
pub fn prototype_logits<T: Real>(
    z: &[T],
    raw_bank: &[T],
    classes: usize,
    per_class: usize,
    temperature: f64,
) -> Vec<T> {
    let bank = NormalizedBank::new(raw_bank, classes, per_class, z.len());
    prototype_scores(z, &bank, temperature).logits
}

/// Accumulates `dz` (w.r.t. the unnormalized fused vector) and gradients on
/// the normalized bank rows.
pub fn prototype_backward<T: Real>(
    z: &[T],
    scores: &PrototypeScores<T>,
    bank: &NormalizedBank<T>,
    temperature: f64,
    dlogits: &[T],
    dz: &mut [T],
    dbank_normalized: &mut [T],
) {
    let k = bank.per_class;
    let d = bank.dim;
    let inv_tau = T::from_f64(1.0 / temperature);
    let mut dzn = vec![T::ZERO; d];
    for c in 0..bank.classes {
        if dlogits[c] == T::ZERO {
            continue;
        }
        let w = softmax(&scores.scaled[c * k..(c + 1) * k]);
        for j in 0..k {
            let dcos = dlogits[c] * w[j] * inv_tau;
            crate::tensor::axpy(dcos, bank.proto(c, j), &mut dzn);
            let row = (c * k + j) * d;
            crate::tensor::axpy(dcos, &scores.zn, &mut dbank_normalized[row..row + d]);
        }
    }
    for (a, b) in dz.iter_mut().zip(l2_normalize_backward(z, scores.norm, &dzn)) {
        *a += b;
    }
}

/// Mean over classes of the mean pairwise cosine similarity between that
/// class's prototypes; zero when a class has a single prototype.
pub fn diversity_penalty<T: Real>(bank: &NormalizedBank<T>) -> T {
    let k = bank.per_class;
    if k < 2 {
        return T::ZERO;
    }
    let pairs = T::from_usize(k * (k - 1) / 2);
    let mut total = T::ZERO;
    for c in 0..bank.classes {
        let mut s = T::ZERO;
        for i in 0..k {
            for j in i + 1..k {
                s += crate::tensor::dot(bank.proto(c, i), bank.proto(c, j));
            }
        }
        total += s / pairs;
    }
    total / T::from_usize(bank.classes)
}

pub fn diversity_backward<T: Real>(bank: &NormalizedBank<T>, weight: T, dbank_normalized: &mut [T]) {
    let k = bank.per_class;
    if k < 2 {
        return;
    }
    let d = bank.dim;
    let scale = weight / (T::from_usize(k * (k - 1) / 2) * T::from_usize(bank.classes));
    for c in 0..bank.classes {
        for i in 0..k {
            let row = (c * k + i) * d;
            for j in 0..k {
                if i != j {
                    crate::tensor::axpy(scale, bank.proto(c, j), &mut dbank_normalized[row..row + d]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_prototype_unit_temperature_is_cosine() {
        let z = [1.0f64, 2.0, -0.5];
        let p = [0.3f64, -1.0, 2.0, 1.0, 1.0, 1.0];
        let logits = prototype_logits(&z, &p, 2, 1, 1.0);
        for c in 0..2 {
            let pc = &p[c * 3..c * 3 + 3];
            let cos = crate::tensor::dot(&z, pc)
                / (libm::sqrt(crate::tensor::dot(&z, &z)) * libm::sqrt(crate::tensor::dot(pc, pc)));
            assert!((logits[c] - cos).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_prototypes_add_log_k() {
        let z = [0.2f64, -0.7, 1.1, 0.4];
        let p = [0.5f64, 0.5, -0.1, 0.9];
        let k = 5;
        let mut bank = Vec::new();
        for _ in 0..2 * k {
            bank.extend_from_slice(&p);
        }
        let logits = prototype_logits(&z, &bank, 2, k, 0.3);
        let single = prototype_logits(&z, &[p, p].concat(), 2, 1, 0.3);
        for c in 0..2 {
            assert!((logits[c] - single[c] - libm::log(k as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn diversity_cases() {
        let one = NormalizedBank::new(&[1.0f64, 0.0, 0.0, 1.0], 2, 1, 2);
        assert_eq!(diversity_penalty(&one), 0.0);
        let same = NormalizedBank::new(&[1.0f64, 2.0, 1.0, 2.0], 1, 2, 2);
        assert!((diversity_penalty(&same) - 1.0).abs() < 1e-9);
        let ortho = NormalizedBank::new(&[1.0f64, 0.0, 0.0, 3.0], 1, 2, 2);
        assert!(diversity_penalty(&ortho).abs() < 1e-12);
    }
}
