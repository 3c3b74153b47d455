//! Numerical core for prototype-augmented multimodal fusion of video-level
//! modality embeddings (face, scene, audio, text) for binary
//! ambivalence/hesitancy recognition.
//!
//! Everything here is `no_std` + `alloc`: pooling, the differentiable
//! primitives and their backward passes, the fusion model, the training
//! loop, metrics and ensembling. File formats, dataset loading and the CLI
//! live in the `ahfusion` crate.

#![no_std]

extern crate alloc;

pub mod aggregation;
pub mod embedding;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use embedding::{EmbeddingMatrix, Modality, PerModality, Sample, Split};
pub use error::{CoreError, Result};
pub use fusion::{FusionConfig, FusionModel};
pub use real::Real;
pub use rng::RngStream;
pub use tensor::{Matrix, Param};
