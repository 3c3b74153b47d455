//! File formats, dataset loading, checkpoints and multi-seed training on top
//! of `ahfusion-core`, plus the `ahfusion` command-line tool.

pub mod checkpoint;
pub mod emb_file;
pub mod error;
pub mod manifest;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
