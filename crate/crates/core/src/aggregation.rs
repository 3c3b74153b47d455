//! Sequence-to-vector pooling for frame- and step-level embeddings.

use alloc::vec::Vec;

use crate::embedding::EmbeddingMatrix;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
    Statistical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledVector {
    pub kind: PoolKind,
    pub data: Vec<f32>,
}

/// Sum in ascending order, so any permutation of the terms gives the same
/// bits.
fn canonical_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

fn column(seq: &EmbeddingMatrix, j: usize) -> Vec<f64> {
    (0..seq.rows()).map(|t| seq.row(t)[j] as f64).collect()
}

fn column_means(seq: &EmbeddingMatrix) -> Vec<f64> {
    let n = seq.rows() as f64;
    (0..seq.cols()).map(|j| canonical_sum(&mut column(seq, j)) / n).collect()
}

/// Average over rows: scene tokens or audio time steps to one vector.
pub fn mean_pool(seq: &EmbeddingMatrix) -> Result<PooledVector> {
    if seq.rows() == 0 {
        return Err(CoreError::EmptyInput);
    }
    let data = column_means(seq).into_iter().map(|v| v as f32).collect();
    Ok(PooledVector { kind: PoolKind::Mean, data })
}

/// `[μ; σ]` over frames with the population standard deviation (divisor F).
/// The accumulation runs in f64, so the μ half equals `mean_pool` exactly.
/// Column sums run in sorted order, which makes both pools exactly
/// invariant to row order.
pub fn statistical_pool(seq: &EmbeddingMatrix) -> Result<PooledVector> {
    if seq.rows() == 0 {
        return Err(CoreError::EmptyInput);
    }
    let mu = column_means(seq);
    let var: Vec<f64> = mu
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let mut sq: Vec<f64> = column(seq, j).into_iter().map(|v| (v - m) * (v - m)).collect();
            canonical_sum(&mut sq)
        })
        .collect();
    let n = seq.rows() as f64;
    let mut data: Vec<f32> = mu.iter().map(|&m| m as f32).collect();
    data.extend(var.iter().map(|&s| libm::sqrt(s / n) as f32));
    Ok(PooledVector { kind: PoolKind::Statistical, data })
}

impl PooledVector {
    pub fn into_embedding(self) -> EmbeddingMatrix {
        EmbeddingMatrix::vector(self.data).expect("pooled vectors are finite and non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(rows: usize, cols: usize, data: &[f32]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn mean_of_single_row_is_identity() {
        assert_eq!(mean_pool(&m(1, 3, &[5.0, 6.0, 7.0])).unwrap().data, vec![5.0, 6.0, 7.0]);
    }

    #[test]
    fn mean_of_two_rows() {
        assert_eq!(mean_pool(&m(2, 2, &[1.0, 1.0, 3.0, 3.0])).unwrap().data, vec![2.0, 2.0]);
    }

    #[test]
    fn statistical_single_frame_has_zero_sigma() {
        assert_eq!(statistical_pool(&m(1, 2, &[4.0, -4.0])).unwrap().data, vec![4.0, -4.0, 0.0, 0.0]);
    }

    #[test]
    fn statistical_constant_frames() {
        let p = statistical_pool(&m(3, 2, &[2.0; 6])).unwrap();
        assert_eq!(p.data, vec![2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn statistical_hand_case() {
        // μ = [1, 1]; deviations ±1 in each column ⇒ σ = 1
        let p = statistical_pool(&m(2, 2, &[0.0, 2.0, 2.0, 0.0])).unwrap();
        assert_eq!(p.data, vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(p.kind, PoolKind::Statistical);
    }
}
