use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Parameterized;
use crate::error::{CoreError, Result};
use crate::real::Real;
use crate::rng::RngStream;
use crate::tensor::{matmul, matmul_nt, matmul_tn_acc, Matrix, Param};

/// Affine map `y = x·W + b` with `W` stored `in × out`; the bias is optional.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(name: &str, d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Param::zeros(format!("{name}.weight"), &[d_in, d_out]),
            bias: Some(Param::zeros(format!("{name}.bias"), &[d_out])),
        }
    }

    pub fn zeros_without_bias(name: &str, d_in: usize, d_out: usize) -> Self {
        Self { weight: Param::zeros(format!("{name}.weight"), &[d_in, d_out]), bias: None }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(name: &str, d_in: usize, d_out: usize, rng: &mut RngStream) -> Self {
        Self::zeros(name, d_in, d_out).glorot_fill(rng)
    }

    pub fn glorot_without_bias(name: &str, d_in: usize, d_out: usize, rng: &mut RngStream) -> Self {
        Self::zeros_without_bias(name, d_in, d_out).glorot_fill(rng)
    }

    fn glorot_fill(self, rng: &mut RngStream) -> Self {
        let mut l = self;
        let (d_in, d_out) = (l.d_in(), l.d_out());
        let limit = libm::sqrt(6.0 / (d_in + d_out) as f64);
        for w in l.weight.value.iter_mut() {
            *w = T::from_f64(rng.uniform_range(-limit, limit));
        }
        l
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.d_in() {
            return Err(CoreError::Shape(format!(
                "linear `{}` expects {} input columns, got {}",
                self.weight.name,
                self.d_in(),
                x.cols()
            )));
        }
        let (n, k, m) = (x.rows(), self.d_in(), self.d_out());
        let mut out = vec![T::ZERO; n * m];
        matmul(x.as_slice(), n, k, &self.weight.value, m, &mut out);
        if let Some(bias) = &self.bias {
            for row in out.chunks_exact_mut(m) {
                for (o, &b) in row.iter_mut().zip(&bias.value) {
                    *o += b;
                }
            }
        }
        Ok(Matrix::from_vec(n, m, out))
    }

    /// Accumulates `dW`, `db` and returns `dx`.
    pub fn backward(&mut self, x: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
        self.accumulate(x, dy);
        let (n, k, m) = (x.rows(), self.d_in(), self.d_out());
        let mut dx = vec![T::ZERO; n * k];
        matmul_nt(dy.as_slice(), n, m, &self.weight.value, k, &mut dx);
        Matrix::from_vec(n, k, dx)
    }

    /// Parameter gradients only, for layers whose input is data.
    pub fn accumulate(&mut self, x: &Matrix<T>, dy: &Matrix<T>) {
        let (n, k, m) = (x.rows(), self.d_in(), self.d_out());
        debug_assert_eq!(dy.rows(), n);
        debug_assert_eq!(dy.cols(), m);
        matmul_tn_acc(x.as_slice(), n, k, dy.as_slice(), m, &mut self.weight.grad);
        if let Some(bias) = self.bias.as_mut() {
            for row in dy.as_slice().chunks_exact(m) {
                for (g, &d) in bias.grad.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
    }

    pub fn name(&self) -> String {
        self.weight.name.trim_end_matches(".weight").into()
    }
}

impl<T> Parameterized<T> for Linear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.weight];
        v.extend(self.bias.as_ref());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.weight];
        v.extend(self.bias.as_mut());
        v
    }
}
