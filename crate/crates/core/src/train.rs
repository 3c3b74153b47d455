//! Training loop: shuffled mini-batches, composite loss, global-norm
//! clipping, RMSprop with cosine annealing, and best-devel checkpointing.


use alloc::vec::Vec;

use crate::embedding::Sample;
use crate::error::{CoreError, Result};
use crate::fusion::{FusionConfig, FusionModel};
use crate::metrics::{argmax, macro_f1, MetricsReport};
use crate::nn::{clip_global_norm, clip_value, cosine_lr, ClipMode, Mode, Parameterized, RmsProp, RmsPropConfig};
use crate::rng::{streams, RngStream};

pub const DEFAULT_SEEDS: [u64; 5] = [42, 2025, 7777, 12345, 31415];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub rmsprop_alpha: f64,
    pub rmsprop_eps: f64,
    /// Cosine horizon in optimizer steps; total training steps when unset.
    pub scheduler_horizon: Option<usize>,
    pub seeds: Vec<u64>,
    pub shuffle: bool,
    /// Stop after this many epochs without a devel improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 9.44e-5,
            lr_min: 0.0,
            weight_decay: 5.55e-4,
            clip: 0.5,
            clip_mode: ClipMode::GlobalNorm,
            rmsprop_alpha: 0.99,
            rmsprop_eps: 1e-8,
            scheduler_horizon: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            shuffle: true,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr > 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr {
            return bad("need 0 <= lr_min <= lr and lr > 0");
        }
        if !(self.weight_decay >= 0.0) || !(self.clip > 0.0) {
            return bad("weight_decay must be >= 0 and clip > 0");
        }
        if !(0.0..1.0).contains(&self.rmsprop_alpha) || !(self.rmsprop_eps > 0.0) {
            return bad("rmsprop_alpha must be in [0, 1) and rmsprop_eps > 0");
        }
        if self.scheduler_horizon == Some(0) {
            return bad("scheduler_horizon must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return bad("seeds must be distinct");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_cls: f64,
    pub loss_proto: f64,
    pub loss_div: f64,
    pub loss_total: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub devel_mf1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best model by devel MF1, or the final one without a devel split.
    pub model: FusionModel<f32>,
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best_devel_mf1: Option<f64>,
    pub seed: u64,
}

/// Whether training should keep going after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

fn labels_of(samples: &[&Sample]) -> Result<Vec<usize>> {
    samples.iter().map(|s| s.label.ok_or_else(|| CoreError::Unlabeled(s.id.clone()))).collect()
}

/// Hard labels by argmax of eval-mode probabilities.
pub fn predict_labels(model: &FusionModel<f32>, samples: &[&Sample]) -> Result<Vec<usize>> {
    Ok(model.predict(samples, 64)?.iter().map(|p| argmax(p)).collect())
}

pub fn evaluate(model: &FusionModel<f32>, samples: &[&Sample]) -> Result<MetricsReport> {
    let truth = labels_of(samples)?;
    macro_f1(&predict_labels(model, samples)?, &truth)
}

pub fn train(
    fusion: &FusionConfig,
    config: &TrainConfig,
    seed: u64,
    train: &[&Sample],
    devel: &[&Sample],
) -> Result<TrainOutcome> {
    train_with_observer(fusion, config, seed, train, devel, |_, _| Control::Continue)
}

/// `observer` runs after every epoch with that epoch's record and the
/// current model.
pub fn train_with_observer(
    fusion: &FusionConfig,
    config: &TrainConfig,
    seed: u64,
    train: &[&Sample],
    devel: &[&Sample],
    mut observer: impl FnMut(&EpochRecord, &FusionModel<f32>) -> Control,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(CoreError::EmptyTrainSplit);
    }
    let train_labels = labels_of(train)?;
    let devel_labels = labels_of(devel)?;

    let mut model = FusionModel::<f32>::init(fusion.clone(), seed)?;
    let mut opt = RmsProp::new(
        RmsPropConfig { alpha: config.rmsprop_alpha, eps: config.rmsprop_eps, weight_decay: config.weight_decay },
        &model.params(),
    );
    let mut dropout_rng = RngStream::with_stream(seed, streams::DROPOUT);
    let mut shuffle_rng = RngStream::with_stream(seed, streams::SHUFFLE);

    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let horizon = config.scheduler_horizon.unwrap_or(config.epochs * steps_per_epoch);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    let mut history = TrainHistory::default();
    let mut best: Option<(FusionModel<f32>, usize, Option<f64>)> = None;
    let mut since_improvement = 0usize;

    for epoch in 1..=config.epochs {
        if config.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let (mut cls, mut proto, mut div, mut total) = (0.0, 0.0, 0.0, 0.0);
        let mut lr = config.lr;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            lr = cosine_lr(step.min(horizon), horizon, config.lr, config.lr_min)?;
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            model.zero_grad();
            let pass = model.forward_batch(&batch, Mode::Train, &mut dropout_rng)?;
            let loss = model.backward(&pass, &labels)?;
            for (component, v) in [("cls", loss.cls), ("proto", loss.proto), ("div", loss.div)] {
                if !v.is_finite() {
                    return Err(CoreError::NonFiniteLoss { component, epoch, step: b });
                }
            }
            let mut params = model.params_mut();
            match config.clip_mode {
                ClipMode::GlobalNorm => {
                    clip_global_norm(&mut params, config.clip);
                }
                ClipMode::Value => clip_value(&mut params, config.clip),
            }
            opt.step(&mut params, lr);
            step += 1;
            let w = chunk.len() as f64;
            cls += loss.cls * w;
            proto += loss.proto * w;
            div += loss.div * w;
            total += loss.total * w;
        }
        let n = train.len() as f64;
        let devel_mf1 = if devel.is_empty() {
            None
        } else {
            Some(macro_f1(&predict_labels(&model, devel)?, &devel_labels)?.mf1)
        };
        let record = EpochRecord {
            epoch,
            loss_cls: cls / n,
            loss_proto: proto / n,
            loss_div: div / n,
            loss_total: total / n,
            lr,
            devel_mf1,
        };
        let improved = match (&best, devel_mf1) {
            (None, _) | (_, None) => true,
            (Some((_, _, Some(prev))), Some(cur)) => cur > *prev,
            (Some((_, _, None)), Some(_)) => true,
        };
        if improved {
            best = Some((model.clone(), epoch, devel_mf1));
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        let control = observer(&record, &model);
        history.epochs.push(record);
        if control == Control::Stop {
            break;
        }
        if config.patience.is_some_and(|p| since_improvement >= p) {
            break;
        }
    }
    let (model, best_epoch, best_devel_mf1) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, history, best_epoch, best_devel_mf1, seed })
}

/// Sanity band for the very first loss: finite and below `2·ln 2` for two
/// classes in the unsmoothed, untrained regime.
pub fn first_step_loss(fusion: &FusionConfig, seed: u64, batch: &[&Sample]) -> Result<f64> {
    let model = FusionModel::<f32>::init(fusion.clone(), seed)?;
    let labels = labels_of(batch)?;
    let mut rng = RngStream::with_stream(seed, streams::DROPOUT);
    let pass = model.forward_batch(batch, Mode::Train, &mut rng)?;
    Ok(model.loss(&pass, &labels)?.cls)
}

