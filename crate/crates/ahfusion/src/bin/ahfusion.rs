use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ahfusion::checkpoint::{self, Checkpoint};
use ahfusion::emb_file::{read_embedding_file, write_embedding_file};
use ahfusion::manifest::load_dataset;
use ahfusion::sweep::{
    ensemble_probabilities, evaluate_checkpoint, history_csv, meta_of, predict_dataset, predictions_csv,
    seed_sweep, train_on, RunConfig,
};
use ahfusion::synth::generate_synthetic_dataset;
use ahfusion::{Error, Result};
use ahfusion_core::aggregation::{mean_pool, statistical_pool};
use ahfusion_core::gradcheck::{gradcheck, FusionObjective};
use ahfusion_core::metrics::macro_f1;
use ahfusion_core::nn::Parameterized;
use ahfusion_core::rng::streams;
use ahfusion_core::synth::SynthSpec;
use ahfusion_core::train::Control;
use ahfusion_core::{FusionModel, Modality, PerModality, RngStream, Sample, Split};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ahfusion", version, about = "Prototype-augmented multimodal fusion for ambivalence/hesitancy recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cross-modal parity dataset
    Synth(SynthArgs),
    /// Train one model and write its checkpoint, history and report
    Train(TrainArgs),
    /// Score a checkpoint on one split
    Eval(EvalArgs),
    /// Average several checkpoints' probabilities and score the result
    Ensemble(EnsembleArgs),
    /// Train one model per configured seed and score them plus their ensemble
    Sweep(SweepArgs),
    /// Compare analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
    /// Pool an EMB1 sequence into a single row
    Pool(PoolArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Training samples
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    n_devel: usize,
    #[arg(long, default_value_t = 0)]
    n_test: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// One dim for every modality, or four comma-separated dims (face,scene,audio,text)
    #[arg(long, value_delimiter = ',', default_value = "16")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    drop_frac: f64,
    #[arg(long, default_value_t = 1.0)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 3.0)]
    amplitude: f64,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset directory or manifest file
    #[arg(long)]
    data: PathBuf,
    /// JSON config with optional "fusion" and "train" sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path; history goes to <out>.history.csv, report to <out>.report.json
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's epoch count
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "devel")]
    split: Split,
    /// Also write per-sample probabilities as CSV
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EnsembleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    ckpts: Vec<PathBuf>,
    #[arg(long, default_value = "devel")]
    split: Split,
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the per-seed checkpoints and report.json
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "devel")]
    split: Split,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Coordinates probed per parameter group
    #[arg(long, default_value_t = 50)]
    probes: usize,
    #[arg(long, default_value_t = 2)]
    samples: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Flip the sign of one analytic gradient to prove the check fails
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolMode {
    Mean,
    Stat,
}

#[derive(clap::Args)]
struct PoolArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mode: PoolMode,
    #[arg(long)]
    out: PathBuf,
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(Error::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    checkpoint::load(path)
}

fn synth(args: SynthArgs) -> Result<()> {
    let dims = match args.dims[..] {
        [d] => PerModality::from_fn(|_| d),
        [face, scene, audio, text] => PerModality { face, scene, audio, text },
        _ => return Err(Error::Usage("--dims takes 1 or 4 values".into())),
    };
    let spec = SynthSpec {
        n_train: args.n,
        n_devel: args.n_devel,
        n_test: args.n_test,
        dims,
        seed: args.seed,
        drop_frac: args.drop_frac,
        feature_noise: args.feature_noise,
        label_noise: args.label_noise,
        amplitude: args.amplitude,
        ..SynthSpec::default()
    };
    spec.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let summary = generate_synthetic_dataset(&args.out, &spec)?;
    print_json(&summary);
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let mut config = RunConfig::load(args.config.as_deref(), dataset.dims())?;
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    config.train.validate()?;
    let seed = args.seed.unwrap_or(config.train.seeds[0]);
    let quiet = args.quiet;
    let outcome = train_on(&dataset, &config, seed, |r, _| {
        if !quiet {
            let devel = r.devel_mf1.map_or("-".into(), |v| format!("{v:.2}"));
            eprintln!("epoch {:>4}  loss {:.5}  lr {:.3e}  devel_mf1 {devel}", r.epoch, r.loss_total, r.lr);
        }
        Control::Continue
    })?;
    let meta = meta_of(&outcome);
    checkpoint::save(&args.out, &outcome.model, &meta)?;
    write_file(&with_suffix(&args.out, ".history.csv"), history_csv(&outcome.history))?;

    let ckpt = Checkpoint { model: outcome.model, meta };
    let mut reports = serde_json::Map::new();
    for split in [Split::Train, Split::Devel] {
        if !dataset.split(split).is_empty() {
            reports.insert(split.name().into(), serde_json::to_value(evaluate_checkpoint(&ckpt, &dataset, split)?).unwrap());
        }
    }
    let report = json!({
        "checkpoint": args.out,
        "seed": seed,
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.history.epochs.len(),
        "best_devel_mf1": outcome.best_devel_mf1,
        "reports": reports,
    });
    write_file(&with_suffix(&args.out, ".report.json"), serde_json::to_string_pretty(&report).unwrap() + "\n")?;
    print_json(&report);
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let dataset = load_dataset(&args.data)?;
    let report = evaluate_checkpoint(&ckpt, &dataset, args.split)?;
    if let Some(path) = &args.predictions {
        let probs = predict_dataset(&ckpt.model, &dataset, args.split)?;
        let labels: Vec<usize> = probs.iter().map(|p| ahfusion_core::metrics::argmax(p)).collect();
        write_file(path, predictions_csv(&dataset.split(args.split), &probs, &labels))?;
    }
    print_json(&report);
    Ok(())
}

fn ensemble(args: EnsembleArgs) -> Result<()> {
    let ckpts = args.ckpts.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>>>()?;
    let dataset = load_dataset(&args.data)?;
    let samples = dataset.split(args.split);
    let models: Vec<&FusionModel<f32>> = ckpts.iter().map(|c| &c.model).collect();
    let (probs, labels) = ensemble_probabilities(&models, &dataset, args.split)?;
    if let Some(path) = &args.predictions {
        write_file(path, predictions_csv(&samples, &probs, &labels))?;
    }
    if ckpts.len() == 1 {
        print_json(&evaluate_checkpoint(&ckpts[0], &dataset, args.split)?);
        return Ok(());
    }
    let truth: Vec<usize> = samples
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::Data(format!("sample `{}` has no label", s.id))))
        .collect::<Result<_>>()?;
    let mut report = macro_f1(&labels, &truth)?;
    report.split = Some(args.split.name().into());
    let members = ckpts.iter().map(|c| evaluate_checkpoint(c, &dataset, args.split)).collect::<Result<Vec<_>>>()?;
    let member_mf1: Vec<f64> = members.iter().map(|r| r.mf1).collect();
    let mut value = serde_json::to_value(&report).unwrap();
    let obj = value.as_object_mut().unwrap();
    obj.insert("ensemble_mf1".into(), json!(report.mf1));
    obj.insert("member_mf1".into(), json!(member_mf1));
    obj.insert("mean_mf1".into(), json!(member_mf1.iter().sum::<f64>() / member_mf1.len() as f64));
    print_json(&value);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let mut config = RunConfig::load(args.config.as_deref(), dataset.dims())?;
    if let Some(seeds) = args.seeds {
        config.train.seeds = seeds;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    config.train.validate()?;
    let report = seed_sweep(&dataset, &config, &args.out, args.split)?;
    let path = args.out.join("report.json");
    write_file(&path, serde_json::to_string_pretty(&report).unwrap() + "\n")?;
    print_json(&report);
    Ok(())
}

/// Random labeled samples matching `dims`, every modality present except a
/// rotating one on odd samples.
fn probe_samples(dims: PerModality<usize>, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = RngStream::with_stream(seed, streams::SYNTH);
    (0..n)
        .map(|i| {
            let features = PerModality::from_fn(|m: Modality| Some((0..dims[m]).map(|_| rng.normal() as f32).collect()));
            let mut s = Sample::new(format!("probe{i}"), Split::Train, Some(i % 2), features);
            if i % 2 == 1 {
                s.mask[Modality::ALL[(i / 2) % Modality::COUNT]] = false;
            }
            s
        })
        .collect()
}

fn run_gradcheck(args: GradcheckArgs) -> Result<()> {
    if args.probes == 0 {
        return Err(Error::Usage("--probes must be at least 1".into()));
    }
    if args.samples == 0 {
        return Err(Error::Usage("--samples must be at least 1".into()));
    }
    let config = match &args.config {
        None => RunConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            RunConfig::from_json(&text, p)?.0
        }
    };
    config.fusion.validate()?;
    let started = Instant::now();
    let samples = probe_samples(config.fusion.input_dims, args.samples, args.seed);
    let model = FusionModel::<f64>::init(config.fusion.clone(), args.seed)?;
    let mut objective = FusionObjective::new(model, samples.iter().collect())?;
    if args.inject_fault {
        objective.corrupt_group = objective.params().iter().position(|p| p.name == "classifier.weight");
    }
    let report = gradcheck(&mut objective, args.probes, args.tolerance, args.seed)?;
    let mut value = serde_json::to_value(&report).unwrap();
    value.as_object_mut().unwrap().insert("seconds".into(), json!(started.elapsed().as_secs_f64()));
    print_json(&value);
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report.failing().map(|g| g.name.as_str()).collect();
        Err(Error::Verification(format!("gradient mismatch in {}", names.join(", "))))
    }
}

fn pool(args: PoolArgs) -> Result<()> {
    let seq = read_embedding_file(&args.input)?;
    let pooled = match args.mode {
        PoolMode::Mean => mean_pool(&seq)?,
        PoolMode::Stat => statistical_pool(&seq)?,
    };
    let out = pooled.into_embedding();
    write_embedding_file(&args.out, &out)?;
    print_json(&json!({ "in_rows": seq.rows(), "in_cols": seq.cols(), "rows": out.rows(), "cols": out.cols(), "out": args.out }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Sweep(a) => sweep(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Pool(a) => pool(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
