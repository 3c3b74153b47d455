//! Macro-F1 evaluation and probability-averaging ensembles.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Binary confusion table and the scores derived from it. `confusion[t][p]`
/// counts samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub confusion: [[u64; 2]; 2],
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub f1: [f64; 2],
    /// Macro F1 as a percentage.
    pub mf1: f64,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub epoch: Option<usize>,
    pub split: Option<String>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class F1 is `2PR/(P+R)`, taken as 0 when `P + R = 0`; undefined
/// precision or recall count as 0.
pub fn macro_f1(predictions: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(CoreError::LengthMismatch { left: predictions.len(), right: truth.len() });
    }
    if truth.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let mut confusion = [[0u64; 2]; 2];
    for (&p, &t) in predictions.iter().zip(truth) {
        for label in [p, t] {
            if label > 1 {
                return Err(CoreError::InvalidLabel { label, classes: 2 });
            }
        }
        confusion[t][p] += 1;
    }
    let mut precision = [0.0; 2];
    let mut recall = [0.0; 2];
    let mut f1 = [0.0; 2];
    for c in 0..2 {
        let o = 1 - c;
        let tp = confusion[c][c];
        precision[c] = ratio(tp, tp + confusion[o][c]);
        recall[c] = ratio(tp, tp + confusion[c][o]);
        let s = precision[c] + recall[c];
        f1[c] = if s == 0.0 { 0.0 } else { 2.0 * precision[c] * recall[c] / s };
    }
    Ok(MetricsReport {
        confusion,
        precision,
        recall,
        f1,
        mf1: 100.0 * (f1[0] + f1[1]) / 2.0,
        n_samples: truth.len(),
        seed: None,
        epoch: None,
        split: None,
    })
}

/// Index of the largest entry; ties go to the lowest index (class 0).
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Elementwise mean of several models' class probabilities, then argmax.
/// The mean is accumulated incrementally so that identical members
/// reproduce the member bit for bit.
pub fn ensemble_average(sets: &[Vec<Vec<f64>>]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let first = sets.first().ok_or(CoreError::EmptyInput)?;
    for s in &sets[1..] {
        if s.len() != first.len() {
            return Err(CoreError::LengthMismatch { left: first.len(), right: s.len() });
        }
        for (a, b) in first.iter().zip(s) {
            if a.len() != b.len() {
                return Err(CoreError::LengthMismatch { left: a.len(), right: b.len() });
            }
        }
    }
    let mut mean = first.clone();
    for (k, s) in sets.iter().enumerate().skip(1) {
        let n = (k + 1) as f64;
        for (mrow, row) in mean.iter_mut().zip(s) {
            for (m, &v) in mrow.iter_mut().zip(row) {
                *m += (v - *m) / n;
            }
        }
    }
    let labels = mean.iter().map(|r| argmax(r)).collect();
    Ok((mean, labels))
}
