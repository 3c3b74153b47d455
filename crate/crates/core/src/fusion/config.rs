use alloc::format;

use crate::embedding::PerModality;
use crate::error::{CoreError, Result};

/// Architecture and loss hyperparameters of the fusion model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FusionConfig {
    /// Width of each modality's incoming embedding.
    pub input_dims: PerModality<usize>,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward hidden width is `ff_factor * d_model`.
    pub ff_factor: usize,
    pub dropout: f64,
    pub use_cls_token: bool,
    pub prototypes_per_class: usize,
    pub temperature: f64,
    pub lambda_proto: f64,
    pub lambda_div: f64,
    /// Label smoothing on the main classifier loss.
    pub label_smoothing: f64,
    /// Label smoothing on the auxiliary prototype loss.
    pub proto_label_smoothing: f64,
    pub num_classes: usize,
    pub layer_norm_eps: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            input_dims: PerModality { face: 256, scene: 768, audio: 256, text: 768 },
            d_model: 128,
            layers: 6,
            heads: 4,
            ff_factor: 6,
            dropout: 0.45,
            use_cls_token: false,
            prototypes_per_class: 16,
            temperature: 0.3,
            lambda_proto: 0.2,
            lambda_div: 0.0,
            label_smoothing: 0.02,
            proto_label_smoothing: 0.0,
            num_classes: 2,
            layer_norm_eps: 1e-5,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(CoreError::InvalidConfig(msg));
        if self.d_model == 0 {
            return bad("d_model must be positive".into());
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(CoreError::HeadsDoNotDivide { d_model: self.d_model, heads: self.heads });
        }
        if self.ff_factor == 0 {
            return bad("ff_factor must be positive".into());
        }
        if let Some((m, _)) = self.input_dims.iter().find(|(_, &d)| d == 0) {
            return bad(format!("input dim for {m} must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::DropoutRange(self.dropout));
        }
        if self.prototypes_per_class == 0 {
            return bad("prototypes_per_class must be at least 1".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.lambda_proto >= 0.0) || !(self.lambda_div >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        for (name, v) in [("label_smoothing", self.label_smoothing), ("proto_label_smoothing", self.proto_label_smoothing)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.num_classes < 2 {
            return bad("need at least two classes".into());
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    pub fn ff_hidden(&self) -> usize {
        self.ff_factor * self.d_model
    }

    /// Token rows per sample: one per modality, plus the CLS row if enabled.
    pub fn tokens_per_sample(&self) -> usize {
        crate::Modality::COUNT + usize::from(self.use_cls_token)
    }
}
