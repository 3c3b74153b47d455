use alloc::vec::Vec;

use super::Mode;
use crate::error::{CoreError, Result};
use crate::real::Real;
use crate::rng::RngStream;
use crate::tensor::Matrix;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu_scalar<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * x * (T::ONE + (x * T::from_f64(FRAC_1_SQRT_2)).erf())
}

/// `Φ(x) + x·φ(x)`.
#[inline]
pub fn gelu_grad_scalar<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::ONE + (x * T::from_f64(FRAC_1_SQRT_2)).erf());
    let pdf = T::from_f64(FRAC_1_SQRT_2PI) * (-(half * x * x)).exp();
    cdf + x * pdf
}

pub fn gelu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let data = x.as_slice().iter().map(|&v| gelu_scalar(v)).collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// `pre` is the GELU input saved from the forward pass.
pub fn gelu_backward<T: Real>(pre: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    let data = pre
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&x, &g)| g * gelu_grad_scalar(x))
        .collect();
    Matrix::from_vec(pre.rows(), pre.cols(), data)
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` so evaluation is
/// the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    p: f64,
}

/// Per-entry multipliers from a train-mode pass; `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutMask<T>(Option<Vec<T>>);

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(CoreError::DropoutRange(p));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn forward<T: Real>(
        &self,
        x: Matrix<T>,
        mode: Mode,
        rng: &mut RngStream,
    ) -> (Matrix<T>, DropoutMask<T>) {
        if mode == Mode::Eval || self.p == 0.0 {
            return (x, DropoutMask(None));
        }
        let keep = T::from_f64(1.0 / (1.0 - self.p));
        let mask: Vec<T> =
            (0..x.as_slice().len()).map(|_| if rng.bernoulli(self.p) { T::ZERO } else { keep }).collect();
        let mut y = x;
        for (v, &m) in y.as_mut_slice().iter_mut().zip(&mask) {
            *v *= m;
        }
        (y, DropoutMask(Some(mask)))
    }
}

impl<T: Real> DropoutMask<T> {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn backward(&self, dy: Matrix<T>) -> Matrix<T> {
        match &self.0 {
            None => dy,
            Some(mask) => {
                let mut dx = dy;
                for (v, &m) in dx.as_mut_slice().iter_mut().zip(mask) {
                    *v *= m;
                }
                dx
            }
        }
    }
}
