use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::real::Real;
use crate::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ClipMode {
    #[default]
    GlobalNorm,
    Value,
}

/// Rescales all gradients so their joint L2 norm is at most `cap`.
/// Returns the factor applied (1 when already within the cap).
pub fn clip_global_norm<T: Real>(params: &mut [&mut Param<T>], cap: f64) -> f64 {
    let sq: f64 = params
        .iter()
        .flat_map(|p| p.grad.iter())
        .map(|g| {
            let g = g.to_f64();
            g * g
        })
        .sum();
    let norm = libm::sqrt(sq);
    if norm <= cap {
        return 1.0;
    }
    let factor = cap / norm;
    let f = T::from_f64(factor);
    for p in params.iter_mut() {
        p.grad.iter_mut().for_each(|g| *g *= f);
    }
    factor
}

/// Clamps every gradient entry to `[-cap, cap]`.
pub fn clip_value<T: Real>(params: &mut [&mut Param<T>], cap: f64) {
    let hi = T::from_f64(cap);
    let lo = -hi;
    for p in params.iter_mut() {
        p.grad.iter_mut().for_each(|g| *g = g.max(lo).min(hi));
    }
}

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `horizon`.
pub fn cosine_lr(step: usize, horizon: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if horizon == 0 {
        return Err(CoreError::InvalidConfig("cosine horizon must be at least 1".into()));
    }
    if step > horizon {
        return Err(CoreError::StepBeyondHorizon { step, horizon });
    }
    let frac = step as f64 / horizon as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + libm::cos(core::f64::consts::PI * frac)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RmsPropConfig {
    pub alpha: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { alpha: 0.99, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// RMSprop without momentum; weight decay is coupled into the gradient.
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    square_avg: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> RmsProp<T> {
    pub fn new(config: RmsPropConfig, params: &[&Param<T>]) -> Self {
        Self {
            config,
            square_avg: params.iter().map(|p| vec![T::ZERO; p.len()]).collect(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn square_avg(&self) -> &[Vec<T>] {
        &self.square_avg
    }

    /// Panics if `params` does not line up with the state it was built for.
    pub fn step(&mut self, params: &mut [&mut Param<T>], lr: f64) {
        assert_eq!(params.len(), self.square_avg.len(), "optimizer state / parameter count");
        let alpha = T::from_f64(self.config.alpha);
        let one_minus = T::from_f64(1.0 - self.config.alpha);
        let eps = T::from_f64(self.config.eps);
        let wd = T::from_f64(self.config.weight_decay);
        let lr = T::from_f64(lr);
        for (p, v) in params.iter_mut().zip(self.square_avg.iter_mut()) {
            assert_eq!(p.len(), v.len(), "optimizer state shape for `{}`", p.name);
            for ((theta, &g0), s) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
                let g = g0 + wd * *theta;
                *s = alpha * *s + one_minus * g * g;
                *theta -= lr * g / (s.sqrt() + eps);
            }
        }
        self.steps += 1;
    }
}
