//! Prototype-augmented multimodal fusion over video-level modality
//! embeddings: per-modality projectors, learnable modality embeddings, a
//! masked Transformer encoder over modality tokens, masked mean pooling, a
//! linear classifier and an auxiliary prototype head.

mod config;
mod model;
mod prototype;

pub use config::FusionConfig;
pub use model::{masked_mean_pool, total_loss, EncoderLayer, ForwardPass, FusionModel, LossBreakdown, Projector};
pub use prototype::{
    diversity_backward, diversity_penalty, prototype_backward, prototype_logits, prototype_scores, NormalizedBank,
    PrototypeScores,
};
