//! Training, prediction and the multi-seed protocol on loaded datasets.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ahfusion_core::metrics::{ensemble_average, macro_f1, MetricsReport};
use ahfusion_core::train::{train_with_observer, Control, EpochRecord, TrainConfig, TrainHistory, TrainOutcome};
use ahfusion_core::{FusionConfig, FusionModel, PerModality, Sample, Split};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointMeta};
use crate::error::{Error, Result};
use crate::manifest::Dataset;

/// Contents of a config file: `{"fusion": {...}, "train": {...}}`. Missing
/// fields take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fusion: FusionConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<(Self, bool)> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|source| Error::Config { path: path.into(), source })?;
        let has_dims = value.get("fusion").and_then(|f| f.get("input_dims")).is_some();
        let config = serde_json::from_value(value).map_err(|source| Error::Config { path: path.into(), source })?;
        Ok((config, has_dims))
    }

    /// Reads `path` (defaults when `None`) and takes the input dims from the
    /// dataset unless the file fixes them, in which case they must agree.
    pub fn load(path: Option<&Path>, dims: PerModality<usize>) -> Result<Self> {
        let (mut config, has_dims) = match path {
            None => (Self::default(), false),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&text, p)?
            }
        };
        if has_dims {
            check_dims(&config.fusion, dims)?;
        } else {
            config.fusion.input_dims = dims;
        }
        config.fusion.validate()?;
        config.train.validate()?;
        Ok(config)
    }
}

pub fn check_dims(config: &FusionConfig, dims: PerModality<usize>) -> Result<()> {
    if config.input_dims != dims {
        return Err(Error::Data(format!(
            "model expects input dims {:?} but the dataset declares {:?}",
            config.input_dims, dims
        )));
    }
    Ok(())
}

pub fn train_on(
    dataset: &Dataset,
    config: &RunConfig,
    seed: u64,
    observer: impl FnMut(&EpochRecord, &FusionModel<f32>) -> Control,
) -> Result<TrainOutcome> {
    check_dims(&config.fusion, dataset.dims())?;
    let train = dataset.split(Split::Train);
    let devel = dataset.split(Split::Devel);
    Ok(train_with_observer(&config.fusion, &config.train, seed, &train, &devel, observer)?)
}

pub fn meta_of(outcome: &TrainOutcome) -> CheckpointMeta {
    CheckpointMeta { seed: Some(outcome.seed), epoch: Some(outcome.best_epoch), devel_mf1: outcome.best_devel_mf1 }
}

pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,loss_cls,loss_proto,loss_div,lr,devel_mf1\n");
    for r in &history.epochs {
        let devel = r.devel_mf1.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", r.epoch, r.loss_cls, r.loss_proto, r.loss_div, r.lr, devel);
    }
    out
}

/// Eval-mode class probabilities in manifest order.
pub fn predict_dataset(model: &FusionModel<f32>, dataset: &Dataset, split: Split) -> Result<Vec<Vec<f64>>> {
    check_dims(&model.config, dataset.dims())?;
    Ok(model.predict(&dataset.split(split), 64)?)
}

fn labels(samples: &[&Sample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::Data(format!("sample `{}` has no label", s.id))))
        .collect()
}

pub fn report_for(probs: &[Vec<f64>], samples: &[&Sample], split: Split) -> Result<MetricsReport> {
    let (_, predicted) = ensemble_average(&[probs.to_vec()])?;
    let mut report = macro_f1(&predicted, &labels(samples)?)?;
    report.split = Some(split.name().into());
    Ok(report)
}

pub fn evaluate_checkpoint(ckpt: &checkpoint::Checkpoint, dataset: &Dataset, split: Split) -> Result<MetricsReport> {
    let probs = predict_dataset(&ckpt.model, dataset, split)?;
    let mut report = report_for(&probs, &dataset.split(split), split)?;
    report.seed = ckpt.meta.seed;
    report.epoch = ckpt.meta.epoch;
    Ok(report)
}

/// Averages the members' probabilities and scores the ensemble.
pub fn ensemble_probabilities(models: &[&FusionModel<f32>], dataset: &Dataset, split: Split) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let sets = models.iter().map(|m| predict_dataset(m, dataset, split)).collect::<Result<Vec<_>>>()?;
    Ok(ensemble_average(&sets)?)
}

pub fn predictions_csv(samples: &[&Sample], probs: &[Vec<f64>], labels: &[usize]) -> String {
    let mut out = String::from("id,p0,p1,predicted,label\n");
    for ((s, p), l) in samples.iter().zip(probs).zip(labels) {
        let truth = s.label.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", s.id, p[0], p[1], l, truth);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub mf1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub split: String,
    pub runs: Vec<SeedRun>,
    pub mean_mf1: f64,
    pub ensemble: MetricsReport,
    pub ensemble_mf1: f64,
}

/// Trains one model per seed in `config.train.seeds`, saves each run's best
/// checkpoint as `seed_<s>.fck` under `out_dir`, and scores every member
/// and their probability average on `split`. Runs go to worker threads;
/// results keep seed order.
pub fn seed_sweep(dataset: &Dataset, config: &RunConfig, out_dir: &Path, split: Split) -> Result<SweepReport> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let seeds = config.train.seeds.clone();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    let mut outcomes: Vec<Option<Result<TrainOutcome>>> = (0..seeds.len()).map(|_| None).collect();
    for (chunk_seeds, chunk_out) in seeds.chunks(workers).zip(outcomes.chunks_mut(workers)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk_seeds
                .iter()
                .map(|&seed| scope.spawn(move || train_on(dataset, config, seed, |_, _| Control::Continue)))
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().expect("training thread panicked"));
            }
        });
    }

    let samples = dataset.split(split);
    let mut runs = Vec::with_capacity(seeds.len());
    let mut models = Vec::with_capacity(seeds.len());
    for outcome in outcomes {
        let outcome = outcome.expect("every seed ran")?;
        let path = out_dir.join(format!("seed_{}.fck", outcome.seed));
        checkpoint::save(&path, &outcome.model, &meta_of(&outcome))?;
        let probs = predict_dataset(&outcome.model, dataset, split)?;
        let mf1 = report_for(&probs, &samples, split)?.mf1;
        runs.push(SeedRun { seed: outcome.seed, checkpoint: path, best_epoch: outcome.best_epoch, mf1 });
        models.push(outcome.model);
    }
    let refs: Vec<&FusionModel<f32>> = models.iter().collect();
    let (_, predicted) = ensemble_probabilities(&refs, dataset, split)?;
    let mut ensemble = macro_f1(&predicted, &labels(&samples)?)?;
    ensemble.split = Some(split.name().into());
    let mean_mf1 = runs.iter().map(|r| r.mf1).sum::<f64>() / runs.len() as f64;
    let ensemble_mf1 = ensemble.mf1;
    Ok(SweepReport { split: split.name().into(), runs, mean_mf1, ensemble, ensemble_mf1 })
}
