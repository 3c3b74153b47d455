use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Parameterized;
use crate::error::{CoreError, Result};
use crate::real::Real;
use crate::tensor::{Matrix, Param};

/// Row-wise layer normalization over the last dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Param<T>,
    pub bias: Param<T>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    /// Normalized input before gain/bias.
    pub xhat: Matrix<T>,
    pub inv_std: Vec<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(name: &str, dim: usize, eps: f64) -> Self {
        Self {
            gain: Param::filled(format!("{name}.gain"), &[dim], T::ONE),
            bias: Param::zeros(format!("{name}.bias"), &[dim]),
            eps,
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, LayerNormCache<T>)> {
        let d = self.dim();
        if x.cols() != d {
            return Err(CoreError::Shape(format!(
                "layer norm `{}` expects {d} columns, got {}",
                self.gain.name,
                x.cols()
            )));
        }
        let n_inv = T::ONE / T::from_usize(d);
        let eps = T::from_f64(self.eps);
        let mut xhat = Matrix::zeros(x.rows(), d);
        let mut out = Matrix::zeros(x.rows(), d);
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() * n_inv;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * n_inv;
            let is = T::ONE / (var + eps).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(r);
            for (h, &v) in xh.iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
            let o = out.row_mut(r);
            for j in 0..d {
                o[j] = xhat.get(r, j) * self.gain.value[j] + self.bias.value[j];
            }
        }
        Ok((out, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &Matrix<T>) -> Matrix<T> {
        let d = self.dim();
        let n = T::from_usize(d);
        let mut dx = Matrix::zeros(dy.rows(), d);
        let mut dxhat = vec![T::ZERO; d];
        for r in 0..dy.rows() {
            let dyr = dy.row(r);
            let xh = cache.xhat.row(r);
            for j in 0..d {
                self.gain.grad[j] += dyr[j] * xh[j];
                self.bias.grad[j] += dyr[j];
                dxhat[j] = dyr[j] * self.gain.value[j];
            }
            let sum_d = dxhat.iter().copied().sum::<T>();
            let sum_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
            let scale = cache.inv_std[r] / n;
            let out = dx.row_mut(r);
            for j in 0..d {
                out[j] = scale * (n * dxhat[j] - sum_d - xh[j] * sum_dx);
            }
        }
        dx
    }
}

impl<T> Parameterized<T> for LayerNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gain, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gain, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_maps_to_zero() {
        let ln = LayerNorm::<f64>::new("ln", 4, 1e-5);
        let (y, _) = ln.forward(&Matrix::from_vec(1, 4, vec![2.0; 4])).unwrap();
        assert_eq!(y.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn normalized_row_is_fixed_point() {
        let ln = LayerNorm::<f64>::new("ln", 2, 1e-12);
        let (y, _) = ln.forward(&Matrix::from_vec(1, 2, vec![-1.0, 1.0])).unwrap();
        assert!((y.get(0, 0) + 1.0).abs() < 1e-9);
        assert!((y.get(0, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rows_have_zero_mean_unit_variance() {
        let mut rng = crate::rng::RngStream::new(11);
        let x = Matrix::from_vec(5, 16, (0..80).map(|_| 3.0 * rng.normal() + 7.0).collect());
        let ln = LayerNorm::<f64>::new("ln", 16, 1e-5);
        let (_, cache) = ln.forward(&x).unwrap();
        for r in 0..5 {
            let row = cache.xhat.row(r);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
