//! One PASS/FAIL line per acceptance criterion, with the measured values.
//! Exits nonzero when any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use ahfusion::checkpoint;
use ahfusion::manifest::load_dataset;
use ahfusion::sweep::{ensemble_probabilities, predict_dataset, RunConfig};
use ahfusion::synth::generate_synthetic_dataset;
use ahfusion_core::aggregation::{mean_pool, statistical_pool};
use ahfusion_core::fusion::prototype_logits;
use ahfusion_core::metrics::{ensemble_average, macro_f1};
use ahfusion_core::synth::SynthSpec;
use ahfusion_core::train::{evaluate, train_with_observer, Control, TrainConfig, DEFAULT_SEEDS};
use ahfusion_core::{EmbeddingMatrix, FusionConfig, FusionModel, Modality, PerModality, RngStream, Sample, Split};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli(args: &[&str]) -> Result<serde_json::Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ahfusion")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("ahfusion {} exited {:?}: {}", args[0], out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gradient_correctness() -> Outcome {
    let report = cli(&["gradcheck"])?;
    let err = report["max_rel_err"].as_f64().unwrap_or(f64::INFINITY);
    let secs = report["seconds"].as_f64().unwrap_or(f64::INFINITY);
    check(err < 1e-4 && secs < 300.0, format!("max rel err {err:.3e} (< 1e-4) in {secs:.1} s (< 300 s)"))
}

fn overfit_sanity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_synthetic_dataset(dir.path(), &SynthSpec { seed: 7, n_train: 100, ..SynthSpec::default() })
        .map_err(|e| e.to_string())?;
    let ds = load_dataset(dir.path()).map_err(|e| e.to_string())?;
    let fusion = FusionConfig { input_dims: ds.dims(), ..FusionConfig::default() };
    let train_cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
    let train = ds.split(Split::Train);
    let started = Instant::now();
    let mut reached = None;
    train_with_observer(&fusion, &train_cfg, 42, &train, &[], |r, model| {
        let mf1 = evaluate(model, &train).map(|m| m.mf1).unwrap_or(0.0);
        if mf1 >= 99.0 {
            reached = Some((r.epoch, mf1));
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    match reached {
        Some((epoch, mf1)) => check(secs < 600.0, format!("train MF1 {mf1:.2} >= 99 at epoch {epoch} (<= 200) in {secs:.1} s (< 600 s)")),
        None => Err(format!("train MF1 stayed below 99 for 200 epochs ({secs:.1} s)")),
    }
}

/// Best devel MF1 of a model trained on `keep` only. Samples left with no
/// modality are dropped from both splits.
fn run_benchmark_model(train: &[&Sample], devel: &[&Sample], dims: PerModality<usize>, keep: &[Modality], seed: u64) -> Result<f64, String> {
    let restrict = |set: &[&Sample]| -> Vec<Sample> {
        set.iter().map(|s| s.restricted_to(keep)).filter(|s| s.available() > 0).collect()
    };
    let (tr, dv) = (restrict(train), restrict(devel));
    let fusion = FusionConfig { input_dims: dims, ..FusionConfig::default() };
    let train_cfg = TrainConfig { epochs: 4, ..TrainConfig::default() };
    let outcome = train_with_observer(&fusion, &train_cfg, seed, &tr.iter().collect::<Vec<_>>(), &dv.iter().collect::<Vec<_>>(), |_, _| Control::Continue)
        .map_err(|e| e.to_string())?;
    outcome.best_devel_mf1.ok_or_else(|| "no devel score".into())
}

fn fusion_beats_unimodal() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec { seed: 7, n_train: 2000, n_devel: 500, drop_frac: 0.1, ..SynthSpec::default() };
    generate_synthetic_dataset(dir.path(), &spec).map_err(|e| e.to_string())?;
    let ds = load_dataset(dir.path()).map_err(|e| e.to_string())?;
    let (train, devel) = (ds.split(Split::Train), ds.split(Split::Devel));
    let started = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &seed) in DEFAULT_SEEDS.iter().enumerate() {
        let solo = Modality::ALL[i % Modality::COUNT];
        let fused = run_benchmark_model(&train, &devel, ds.dims(), &Modality::ALL, seed)?;
        let uni = run_benchmark_model(&train, &devel, ds.dims(), &[solo], seed)?;
        ok &= fused >= 90.0 && uni <= 65.0;
        parts.push(format!("seed {seed}: fusion {fused:.2} / {solo}-only {uni:.2}"));
    }
    let secs = started.elapsed().as_secs_f64();
    check(ok && secs < 1800.0, format!("{} (fusion >= 90, unimodal <= 65) in {secs:.0} s (< 1800 s)", parts.join("; ")))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn prototype_properties() -> Outcome {
    let (d, k, tau) = (128, 16, 0.3);
    let mut rng = RngStream::new(2024);
    let (mut scale_err, mut degen_err, mut bound_violation) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let bank: Vec<f64> = (0..2 * k * d).map(|_| rng.normal()).collect();
        let c = 10f64.powf(rng.uniform_range(-3.0, 3.0));
        let a = prototype_logits(&z, &bank, 2, k, tau);
        let zc: Vec<f64> = z.iter().map(|v| v * c).collect();
        let b = prototype_logits(&zc, &bank, 2, k, tau);
        for class in 0..2 {
            scale_err = scale_err.max((a[class] - b[class]).abs());
            let protos = &bank[class * k * d..(class + 1) * k * d];
            let best = protos.chunks(d).map(|q| cosine(&z, q) / tau).fold(f64::MIN, f64::max);
            bound_violation = bound_violation.max(best - a[class]).max(a[class] - best - (k as f64).ln());
        }
        let single: Vec<f64> = (0..2 * d).map(|_| rng.normal()).collect();
        let one = prototype_logits(&z, &single, 2, 1, 1.0);
        for (class, q) in single.chunks(d).enumerate() {
            degen_err = degen_err.max((one[class] - cosine(&z, q)).abs());
        }
    }
    check(
        scale_err < 1e-6 && degen_err < 1e-6 && bound_violation <= 1e-9,
        format!("1000 draws: scale change {scale_err:.2e} (< 1e-6), K=1/tau=1 vs cosine {degen_err:.2e} (< 1e-6), worst LSE bound excess {bound_violation:.2e}"),
    )
}

fn mask_contract() -> Outcome {
    let config = FusionConfig { input_dims: PerModality { face: 24, scene: 32, audio: 16, text: 40 }, ..FusionConfig::default() };
    let model = FusionModel::<f32>::init(config.clone(), 99).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(100);
    let mut samples = Vec::new();
    let mut masked = 0;
    for i in 0..100 {
        let features = PerModality::from_fn(|m| Some((0..config.input_dims[m]).map(|_| rng.normal() as f32).collect()));
        let mut s = Sample::new(format!("s{i}"), Split::Devel, Some(i % 2), features);
        let keep = Modality::ALL[rng.below(Modality::COUNT)];
        for m in Modality::ALL {
            if m != keep && rng.bernoulli(0.5) {
                s.mask[m] = false;
                masked += 1;
            }
        }
        samples.push(s);
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    let before = model.predict(&refs, 32).map_err(|e| e.to_string())?;
    let mut perturbed = samples.clone();
    for s in &mut perturbed {
        for m in Modality::ALL {
            if !s.mask[m] {
                let garbage = s.features[m].as_mut().unwrap();
                for (j, v) in garbage.iter_mut().enumerate() {
                    *v = if j % 7 == 0 { f32::NAN } else { (rng.normal() * 1e6) as f32 };
                }
            }
        }
    }
    let refs: Vec<&Sample> = perturbed.iter().collect();
    let after = model.predict(&refs, 32).map_err(|e| e.to_string())?;
    let same = before.iter().flatten().zip(after.iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
    check(same, format!("100 samples, {masked} masked modalities perturbed: probabilities bitwise {}", if same { "unchanged" } else { "CHANGED" }))
}

fn brute_mf1(pred: &[usize], truth: &[usize]) -> f64 {
    let mut sum = 0.0;
    for c in 0..2 {
        let (mut tp, mut fp, mut fneg) = (0u32, 0u32, 0u32);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        sum += if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    50.0 * sum
}

fn metric_oracle() -> Outcome {
    let mut rng = RngStream::new(31);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = 1 + rng.below(300);
        let truth: Vec<usize> = match i % 5 {
            0 => vec![rng.below(2); n],
            _ => (0..n).map(|_| rng.below(2)).collect(),
        };
        let pred: Vec<usize> = match i % 4 {
            0 => vec![rng.below(2); n],
            _ => (0..n).map(|_| rng.below(2)).collect(),
        };
        let got = macro_f1(&pred, &truth).map_err(|e| e.to_string())?.mf1;
        worst = worst.max((got - brute_mf1(&pred, &truth)).abs());
    }
    let truth: Vec<usize> = (0..1000).map(|i| i % 2).collect();
    let all_pos = macro_f1(&vec![1; 1000], &truth).map_err(|e| e.to_string())?.mf1;
    check(
        worst < 1e-9 && (all_pos - 33.33).abs() <= 0.01,
        format!("1000 sets: max |diff| vs brute force {worst:.2e} (< 1e-9); balanced all-positive MF1 {all_pos:.4} (33.33 +- 0.01)"),
    )
}

fn small_dataset(dir: &Path, n_train: usize, n_devel: usize) -> Result<ahfusion::manifest::Dataset, String> {
    let spec = SynthSpec { seed: 7, n_train, n_devel, drop_frac: 0.1, ..SynthSpec::default() };
    generate_synthetic_dataset(dir, &spec).map_err(|e| e.to_string())?;
    load_dataset(dir).map_err(|e| e.to_string())
}

fn ensemble_protocol() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let ds = small_dataset(&data, 200, 100)?;
    let model = FusionModel::<f32>::init(FusionConfig { input_dims: ds.dims(), ..FusionConfig::default() }, 3).map_err(|e| e.to_string())?;
    let single = predict_dataset(&model, &ds, Split::Devel).map_err(|e| e.to_string())?;
    let mut identical = true;
    for n in 1..=5 {
        let copies = vec![&model; n];
        let (mean, _) = ensemble_probabilities(&copies, &ds, Split::Devel).map_err(|e| e.to_string())?;
        let (direct, _) = ensemble_average(&vec![single.clone(); n]).map_err(|e| e.to_string())?;
        identical &= mean.iter().flatten().zip(single.iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
        identical &= direct == single;
    }

    let out = dir.path().join("sweep");
    let started = Instant::now();
    let report = cli(&["sweep", "--data", p(&data), "--out", p(&out), "--epochs", "2"])?;
    let secs = started.elapsed().as_secs_f64();
    let runs = report["runs"].as_array().cloned().unwrap_or_default();
    let seeds: Vec<u64> = runs.iter().filter_map(|r| r["seed"].as_u64()).collect();
    let files = DEFAULT_SEEDS.iter().filter(|s| out.join(format!("seed_{s}.fck")).is_file()).count();
    let has_report = out.join("report.json").is_file() && report["ensemble_mf1"].is_number() && report["mean_mf1"].is_number();
    check(
        identical && seeds == DEFAULT_SEEDS && files == 5 && has_report,
        format!(
            "N=1..5 copies bitwise {}; sweep seeds {seeds:?}, {files} checkpoints, ensemble MF1 {:.2}, mean MF1 {:.2} ({secs:.0} s)",
            if identical { "identical" } else { "DIFFERENT" },
            report["ensemble_mf1"].as_f64().unwrap_or(f64::NAN),
            report["mean_mf1"].as_f64().unwrap_or(f64::NAN),
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let ds = small_dataset(&data, 100, 50)?;
    let (a, b) = (dir.path().join("a.fck"), dir.path().join("b.fck"));
    for out in [&a, &b] {
        cli(&["train", "--data", p(&data), "--seed", "42", "--epochs", "3", "--out", p(out), "--quiet"])?;
    }
    let (ba, bb) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
    let loaded = checkpoint::load(&a).map_err(|e| e.to_string())?;
    let resaved = dir.path().join("c.fck");
    checkpoint::save(&resaved, &loaded.model, &loaded.meta).map_err(|e| e.to_string())?;
    let reloaded = checkpoint::load(&resaved).map_err(|e| e.to_string())?;
    let mut same_preds = true;
    for split in [Split::Train, Split::Devel] {
        let x = predict_dataset(&loaded.model, &ds, split).map_err(|e| e.to_string())?;
        let y = predict_dataset(&reloaded.model, &ds, split).map_err(|e| e.to_string())?;
        same_preds &= x.iter().flatten().zip(y.iter().flatten()).all(|(u, v)| u.to_bits() == v.to_bits());
    }
    let cfg = RunConfig::load(None, ds.dims()).map_err(|e| e.to_string())?;
    let lib = ahfusion::sweep::train_on(&ds, &RunConfig { train: TrainConfig { epochs: 3, ..cfg.train.clone() }, ..cfg }, 42, |_, _| Control::Continue)
        .map_err(|e| e.to_string())?;
    let lib_bytes = checkpoint::encode(&lib.model, &ahfusion::sweep::meta_of(&lib));
    check(
        ba == bb && ba == lib_bytes && same_preds,
        format!(
            "two CLI trains {} ({} bytes), library run {}, save/load predictions bitwise {}",
            if ba == bb { "byte-identical" } else { "DIFFER" },
            ba.len(),
            if ba == lib_bytes { "identical" } else { "DIFFERS" },
            if same_preds { "identical" } else { "DIFFERENT" },
        ),
    )
}

fn pooling_oracles() -> Outcome {
    let mut rng = RngStream::new(5);
    let (mut worst, mut permuted_equal) = (0.0f64, true);
    for _ in 0..100 {
        let (r, c) = (1 + rng.below(64), 1 + rng.below(48));
        let data: Vec<f32> = (0..r * c).map(|_| (rng.normal() * 3.0 + rng.uniform_range(-5.0, 5.0)) as f32).collect();
        let m = EmbeddingMatrix::new(r, c, data.clone()).map_err(|e| e.to_string())?;
        let mean = mean_pool(&m).map_err(|e| e.to_string())?.data;
        let stat = statistical_pool(&m).map_err(|e| e.to_string())?.data;
        for j in 0..c {
            let col: Vec<f64> = (0..r).map(|i| data[i * c + j] as f64).collect();
            let mu = col.iter().sum::<f64>() / r as f64;
            let sigma = (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / r as f64).sqrt();
            worst = worst.max((mean[j] as f64 - mu).abs()).max((stat[j] as f64 - mu).abs()).max((stat[c + j] as f64 - sigma).abs());
        }
        let mut order: Vec<usize> = (0..r).collect();
        rng.shuffle(&mut order);
        let shuffled: Vec<f32> = order.iter().flat_map(|&i| data[i * c..(i + 1) * c].iter().copied()).collect();
        let pm = EmbeddingMatrix::new(r, c, shuffled).map_err(|e| e.to_string())?;
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        permuted_equal &= bits(&mean_pool(&pm).map_err(|e| e.to_string())?.data) == bits(&mean);
        permuted_equal &= bits(&statistical_pool(&pm).map_err(|e| e.to_string())?.data) == bits(&stat);
    }
    check(
        worst < 1e-6 && permuted_equal,
        format!("100 matrices: max |diff| vs loop oracle {worst:.2e} (< 1e-6); row permutation {}", if permuted_equal { "bitwise invariant" } else { "CHANGES OUTPUT" }),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradient_correctness),
        ("overfit sanity", overfit_sanity),
        ("fusion beats unimodal", fusion_beats_unimodal),
        ("prototype head properties", prototype_properties),
        ("mask contract", mask_contract),
        ("metric oracle", metric_oracle),
        ("ensemble identity and protocol", ensemble_protocol),
        ("determinism", determinism),
        ("pooling oracles", pooling_oracles),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let result = run();
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
