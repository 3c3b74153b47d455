//! Differentiable building blocks with hand-written backward passes.
//!
//! Every layer follows the same pattern: `forward` borrows the layer
//! immutably and returns its output plus whatever the backward pass needs;
//! `backward` takes that cache and the upstream gradient, accumulates into
//! the layer's parameter gradients and returns the gradient for its input.

mod activation;
mod attention;
mod layer_norm;
mod linear;
mod loss;
mod optim;

pub use activation::{gelu, gelu_backward, gelu_grad_scalar, gelu_scalar, Dropout, DropoutMask};
pub use attention::{AttentionCache, MultiHeadAttention, MASKED_SCORE};
pub use layer_norm::{LayerNorm, LayerNormCache};
pub use linear::Linear;
pub use loss::{
    cross_entropy_smoothed, l2_normalize, l2_normalize_backward, log_softmax, logsumexp, softmax,
    L2_EPS,
};
pub use optim::{clip_global_norm, clip_value, cosine_lr, ClipMode, RmsProp, RmsPropConfig};

use alloc::vec::Vec;

use crate::tensor::Param;

/// Training enables dropout; evaluation is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Anything that owns learnable tensors.
pub trait Parameterized<T> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self)
    where
        T: crate::Real,
    {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}
