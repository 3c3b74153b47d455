use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::linear::Linear;
use super::Parameterized;
use crate::error::{CoreError, Result};
use crate::real::Real;
use crate::rng::RngStream;
use crate::tensor::{axpy, dot, Matrix, Param};

/// Score added to masked keys before the softmax.
pub const MASKED_SCORE: f64 = -1e9;

/// Multi-head self-attention over short per-sample token blocks with a
/// key padding mask. The input stacks `B` samples of `tokens` rows each.
/// The key projection has no bias: it would shift every score of a query
/// row equally, which the softmax cancels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    input: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    /// `[sample][head][query][key]`
    probs: Vec<T>,
    concat: Matrix<T>,
    tokens: usize,
}

impl<T: Real> AttentionCache<T> {
    /// Attention weights of one sample, head and query row.
    pub fn weights(&self, sample: usize, head: usize, query: usize, heads: usize) -> &[T] {
        let t = self.tokens;
        let base = ((sample * heads + head) * t + query) * t;
        &self.probs[base..base + t]
    }
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn zeros(name: &str, d: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(CoreError::HeadsDoNotDivide { d_model: d, heads });
        }
        Ok(Self {
            query: Linear::zeros(&format!("{name}.query"), d, d),
            key: Linear::zeros_without_bias(&format!("{name}.key"), d, d),
            value: Linear::zeros(&format!("{name}.value"), d, d),
            output: Linear::zeros(&format!("{name}.output"), d, d),
            heads,
        })
    }

    pub fn glorot(name: &str, d: usize, heads: usize, rng: &mut RngStream) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(CoreError::HeadsDoNotDivide { d_model: d, heads });
        }
        Ok(Self {
            query: Linear::glorot(&format!("{name}.query"), d, d, rng),
            key: Linear::glorot_without_bias(&format!("{name}.key"), d, d, rng),
            value: Linear::glorot(&format!("{name}.value"), d, d, rng),
            output: Linear::glorot(&format!("{name}.output"), d, d, rng),
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.query.d_in()
    }

    /// `mask[i]` marks token row `i` as a valid key. Every sample block
    /// needs at least one valid token.
    pub fn forward(
        &self,
        x: &Matrix<T>,
        tokens: usize,
        mask: &[bool],
    ) -> Result<(Matrix<T>, AttentionCache<T>)> {
        let d = self.dim();
        if tokens == 0 || x.rows() % tokens != 0 || mask.len() != x.rows() {
            return Err(CoreError::Shape(format!(
                "attention: {} rows, {} tokens per sample, mask of {}",
                x.rows(),
                tokens,
                mask.len()
            )));
        }
        if mask.chunks(tokens).any(|block| !block.iter().any(|&m| m)) {
            return Err(CoreError::AllMasked);
        }
        let q = self.query.forward(x)?;
        let k = self.key.forward(x)?;
        let v = self.value.forward(x)?;
        let batch = x.rows() / tokens;
        let h = self.heads;
        let dh = d / h;
        let scale = T::from_f64(1.0 / libm::sqrt(dh as f64));
        let masked = T::from_f64(MASKED_SCORE);
        let mut probs = vec![T::ZERO; batch * h * tokens * tokens];
        let mut concat = Matrix::zeros(x.rows(), d);
        let mut scores = vec![T::ZERO; tokens];
        for b in 0..batch {
            let r0 = b * tokens;
            for head in 0..h {
                let c0 = head * dh;
                for i in 0..tokens {
                    let qi = &q.row(r0 + i)[c0..c0 + dh];
                    for j in 0..tokens {
                        let kj = &k.row(r0 + j)[c0..c0 + dh];
                        scores[j] = dot(qi, kj) * scale + if mask[r0 + j] { T::ZERO } else { masked };
                    }
                    let mx = scores.iter().copied().fold(scores[0], T::max);
                    let mut total = T::ZERO;
                    for s in scores.iter_mut() {
                        *s = (*s - mx).exp();
                        total += *s;
                    }
                    let base = ((b * h + head) * tokens + i) * tokens;
                    let p = &mut probs[base..base + tokens];
                    for (pj, &s) in p.iter_mut().zip(&scores) {
                        *pj = s / total;
                    }
                    let out = &mut concat.row_mut(r0 + i)[c0..c0 + dh];
                    for j in 0..tokens {
                        axpy(probs[base + j], &v.row(r0 + j)[c0..c0 + dh], out);
                    }
                }
            }
        }
        let y = self.output.forward(&concat)?;
        Ok((y, AttentionCache { input: x.clone(), q, k, v, probs, concat, tokens }))
    }

    pub fn backward(&mut self, cache: &AttentionCache<T>, dy: &Matrix<T>) -> Matrix<T> {
        let d = self.dim();
        let tokens = cache.tokens;
        let rows = cache.input.rows();
        let batch = rows / tokens;
        let h = self.heads;
        let dh = d / h;
        let scale = T::from_f64(1.0 / libm::sqrt(dh as f64));

        let dconcat = self.output.backward(&cache.concat, dy);
        let mut dq = Matrix::zeros(rows, d);
        let mut dk = Matrix::zeros(rows, d);
        let mut dv = Matrix::zeros(rows, d);
        let mut dp = vec![T::ZERO; tokens];
        for b in 0..batch {
            let r0 = b * tokens;
            for head in 0..h {
                let c0 = head * dh;
                for i in 0..tokens {
                    let base = ((b * h + head) * tokens + i) * tokens;
                    let p = &cache.probs[base..base + tokens];
                    let doi = &dconcat.row(r0 + i)[c0..c0 + dh];
                    for j in 0..tokens {
                        dp[j] = dot(doi, &cache.v.row(r0 + j)[c0..c0 + dh]);
                        axpy(p[j], doi, &mut dv.row_mut(r0 + j)[c0..c0 + dh]);
                    }
                    let inner = p.iter().zip(&dp).map(|(&a, &b)| a * b).sum::<T>();
                    for j in 0..tokens {
                        let ds = p[j] * (dp[j] - inner) * scale;
                        if ds != T::ZERO {
                            axpy(ds, &cache.k.row(r0 + j)[c0..c0 + dh], &mut dq.row_mut(r0 + i)[c0..c0 + dh]);
                            axpy(ds, &cache.q.row(r0 + i)[c0..c0 + dh], &mut dk.row_mut(r0 + j)[c0..c0 + dh]);
                        }
                    }
                }
            }
        }
        let mut dx = self.query.backward(&cache.input, &dq);
        dx.add_assign(&self.key.backward(&cache.input, &dk));
        dx.add_assign(&self.value.backward(&cache.input, &dv));
        dx
    }
}

impl<T> Parameterized<T> for MultiHeadAttention<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.query.params();
        v.extend(self.key.params());
        v.extend(self.value.params());
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.query.params_mut();
        v.extend(self.key.params_mut());
        v.extend(self.value.params_mut());
        v.extend(self.output.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_attention(d: usize, heads: usize, seed: u64) -> MultiHeadAttention<f64> {
        let mut rng = RngStream::new(seed);
        let mut a = MultiHeadAttention::glorot("attn", d, heads, &mut rng).unwrap();
        for p in a.params_mut() {
            for v in p.value.iter_mut() {
                *v += 0.1 * rng.normal();
            }
        }
        a
    }

    #[test]
    fn heads_must_divide_width() {
        assert!(matches!(
            MultiHeadAttention::<f32>::zeros("a", 10, 4),
            Err(CoreError::HeadsDoNotDivide { .. })
        ));
    }

    #[test]
    fn single_token_attends_to_itself() {
        let a = random_attention(8, 2, 1);
        let x = Matrix::from_vec(1, 8, (0..8).map(|i| i as f64 * 0.1).collect());
        let (y, cache) = a.forward(&x, 1, &[true]).unwrap();
        for head in 0..2 {
            assert_eq!(cache.weights(0, head, 0, 2), &[1.0]);
        }
        let v = a.value.forward(&x).unwrap();
        let expected = a.output.forward(&v).unwrap();
        for (p, q) in y.as_slice().iter().zip(expected.as_slice()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn all_masked_block_is_rejected() {
        let a = random_attention(8, 2, 2);
        let x = Matrix::zeros(4, 8);
        assert_eq!(a.forward(&x, 2, &[true, false, false, false]).unwrap_err(), CoreError::AllMasked);
    }

    #[test]
    fn masked_token_content_cannot_leak() {
        let a = random_attention(8, 2, 3);
        let mut rng = RngStream::new(4);
        let mut x = Matrix::from_vec(4, 8, (0..32).map(|_| rng.normal()).collect());
        let mask = [true, true, false, true];
        let (y1, c1) = a.forward(&x, 4, &mask).unwrap();
        for j in 0..8 {
            x.set(2, j, 1e3 * rng.normal());
        }
        let (y2, _) = a.forward(&x, 4, &mask).unwrap();
        for r in [0, 1, 3] {
            assert_eq!(y1.row(r), y2.row(r));
        }
        for head in 0..2 {
            for q in 0..4 {
                let w = c1.weights(0, head, q, 2);
                assert!(w[2] < 1e-30);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}
