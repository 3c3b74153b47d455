use ahfusion_core::fusion::{FusionConfig, FusionModel};
use ahfusion_core::gradcheck::{gradcheck, FusionObjective, Objective};
use ahfusion_core::nn::{LayerNorm, Linear, MultiHeadAttention, Parameterized};
use ahfusion_core::{CoreError, Matrix, Modality, Param, PerModality, RngStream, Sample, Split};

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
}

fn input_param(x: &Matrix<f64>) -> Param<f64> {
    let mut p = Param::zeros("input", &[x.rows(), x.cols()]);
    p.value = x.as_slice().to_vec();
    p
}

fn as_matrix(p: &Param<f64>) -> Matrix<f64> {
    Matrix::from_vec(p.shape[0], p.shape[1], p.value.clone())
}

/// `Σ c ⊙ y²` through a linear layer, including the input gradient.
struct LinearObjective {
    layer: Linear<f64>,
    input: Param<f64>,
    coef: Vec<f64>,
}

impl Parameterized<f64> for LinearObjective {
    fn params(&self) -> Vec<&Param<f64>> {
        let mut v = self.layer.params();
        v.push(&self.input);
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut v = self.layer.params_mut();
        v.push(&mut self.input);
        v
    }
}

impl Objective for LinearObjective {
    fn loss(&self) -> ahfusion_core::Result<f64> {
        let y = self.layer.forward(&as_matrix(&self.input))?;
        Ok(y.as_slice().iter().zip(&self.coef).map(|(y, c)| c * y * y).sum())
    }
    fn loss_and_grad(&mut self) -> ahfusion_core::Result<f64> {
        self.zero_grad();
        let x = as_matrix(&self.input);
        let y = self.layer.forward(&x)?;
        let dy = Matrix::from_vec(y.rows(), y.cols(), y.as_slice().iter().zip(&self.coef).map(|(y, c)| 2.0 * c * y).collect());
        let dx = self.layer.backward(&x, &dy);
        self.input.grad.copy_from_slice(dx.as_slice());
        Ok(y.as_slice().iter().zip(&self.coef).map(|(y, c)| c * y * y).sum())
    }
}

#[test]
fn linear_backward_matches_finite_differences() {
    let mut rng = RngStream::new(1);
    let mut layer = Linear::glorot("lin", 4, 2, &mut rng);
    layer.bias.as_mut().unwrap().value = vec![0.3, -0.2];
    let x = random_matrix(3, 4, &mut rng);
    let coef = (0..6).map(|_| rng.normal()).collect();
    let mut obj = LinearObjective { layer, input: input_param(&x), coef };
    let report = gradcheck(&mut obj, 50, 1e-6, 3).unwrap();
    assert!(report.passed, "{report:?}");
    assert!(report.max_rel_err < 1e-6);
}

struct LayerNormObjective {
    norm: LayerNorm<f64>,
    input: Param<f64>,
    coef: Vec<f64>,
}

impl Parameterized<f64> for LayerNormObjective {
    fn params(&self) -> Vec<&Param<f64>> {
        let mut v = self.norm.params();
        v.push(&self.input);
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut v = self.norm.params_mut();
        v.push(&mut self.input);
        v
    }
}

impl Objective for LayerNormObjective {
    fn loss(&self) -> ahfusion_core::Result<f64> {
        let (y, _) = self.norm.forward(&as_matrix(&self.input))?;
        Ok(y.as_slice().iter().zip(&self.coef).map(|(y, c)| c * y).sum())
    }
    fn loss_and_grad(&mut self) -> ahfusion_core::Result<f64> {
        self.zero_grad();
        let (y, cache) = self.norm.forward(&as_matrix(&self.input))?;
        let dy = Matrix::from_vec(y.rows(), y.cols(), self.coef.clone());
        let dx = self.norm.backward(&cache, &dy);
        self.input.grad.copy_from_slice(dx.as_slice());
        Ok(y.as_slice().iter().zip(&self.coef).map(|(y, c)| c * y).sum())
    }
}

#[test]
fn layer_norm_backward_matches_finite_differences() {
    let mut rng = RngStream::new(2);
    let mut norm = LayerNorm::new("ln", 8, 1e-5);
    for (g, b) in norm.gain.value.iter_mut().zip(norm.bias.value.iter_mut()) {
        *g = 1.0 + 0.3 * rng.normal();
        *b = 0.1 * rng.normal();
    }
    let x = random_matrix(2, 8, &mut rng);
    let coef = (0..16).map(|_| rng.normal()).collect();
    let mut obj = LayerNormObjective { norm, input: input_param(&x), coef };
    let report = gradcheck(&mut obj, 50, 1e-4, 3).unwrap();
    assert!(report.passed, "{report:?}");
}

struct AttentionObjective {
    attention: MultiHeadAttention<f64>,
    input: Param<f64>,
    mask: Vec<bool>,
    tokens: usize,
    coef: Vec<f64>,
}

impl Parameterized<f64> for AttentionObjective {
    fn params(&self) -> Vec<&Param<f64>> {
        let mut v = self.attention.params();
        v.push(&self.input);
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut v = self.attention.params_mut();
        v.push(&mut self.input);
        v
    }
}

impl Objective for AttentionObjective {
    fn loss(&self) -> ahfusion_core::Result<f64> {
        let (y, _) = self.attention.forward(&as_matrix(&self.input), self.tokens, &self.mask)?;
        Ok(y.as_slice().iter().zip(&self.coef).map(|(y, c)| c * y * y).sum())
    }
    fn loss_and_grad(&mut self) -> ahfusion_core::Result<f64> {
        self.zero_grad();
        let (y, cache) = self.attention.forward(&as_matrix(&self.input), self.tokens, &self.mask)?;
        let dy = Matrix::from_vec(y.rows(), y.cols(), y.as_slice().iter().zip(&self.coef).map(|(y, c)| 2.0 * c * y).collect());
        let dx = self.attention.backward(&cache, &dy);
        self.input.grad.copy_from_slice(dx.as_slice());
        Ok(y.as_slice().iter().zip(&self.coef).map(|(y, c)| c * y * y).sum())
    }
}

fn attention_objective(mask: Vec<bool>, tokens: usize, seed: u64) -> AttentionObjective {
    let mut rng = RngStream::new(seed);
    let mut attention = MultiHeadAttention::glorot("attn", 8, 2, &mut rng).unwrap();
    for p in attention.params_mut() {
        for v in p.value.iter_mut() {
            *v += 0.2 * rng.normal();
        }
    }
    let x = random_matrix(mask.len(), 8, &mut rng);
    let coef = (0..mask.len() * 8).map(|_| rng.normal()).collect();
    AttentionObjective { attention, input: input_param(&x), mask, tokens, coef }
}

#[test]
fn attention_backward_matches_finite_differences() {
    let mut obj = attention_objective(vec![true; 3], 3, 4);
    let report = gradcheck(&mut obj, 50, 1e-4, 5).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn masked_attention_over_two_samples_matches_finite_differences() {
    let mut obj = attention_objective(vec![true, false, true, false, true, true], 3, 6);
    let report = gradcheck(&mut obj, 50, 1e-4, 7).unwrap();
    assert!(report.passed, "{report:?}");
}

fn small_config() -> FusionConfig {
    FusionConfig {
        input_dims: PerModality { face: 6, scene: 5, audio: 7, text: 4 },
        d_model: 8,
        layers: 2,
        heads: 2,
        ff_factor: 3,
        dropout: 0.3,
        prototypes_per_class: 3,
        ..FusionConfig::default()
    }
}

pub fn random_samples(config: &FusionConfig, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = RngStream::new(seed);
    (0..n)
        .map(|i| {
            let features = PerModality::from_fn(|m: Modality| {
                Some((0..config.input_dims[m]).map(|_| rng.normal() as f32).collect::<Vec<f32>>())
            });
            let mut s = Sample::new(format!("s{i}"), Split::Train, Some(i % 2), features);
            // drop one modality on every other sample
            if i % 2 == 1 {
                s.mask[Modality::ALL[i % 4]] = false;
            }
            s
        })
        .collect()
}

fn fusion_report(config: FusionConfig, probes: usize) -> ahfusion_core::gradcheck::GradCheckReport {
    let samples = random_samples(&config, 3, 11);
    let model = FusionModel::<f64>::init(config, 42).unwrap();
    let mut obj = FusionObjective::new(model, samples.iter().collect()).unwrap();
    gradcheck(&mut obj, probes, 1e-4, 1).unwrap()
}

#[test]
fn fusion_objective_gradients_match() {
    let report = fusion_report(small_config(), 30);
    assert!(report.passed, "{:?}", report.failing().collect::<Vec<_>>());
}

#[test]
fn fusion_gradients_with_diversity_and_cls_token() {
    let config = FusionConfig { lambda_div: 0.5, use_cls_token: true, label_smoothing: 0.1, ..small_config() };
    let report = fusion_report(config, 30);
    assert!(report.passed, "{:?}", report.failing().collect::<Vec<_>>());
    assert!(report.groups.iter().any(|g| g.name == "cls_token"));
}

#[test]
fn encoder_without_layers_still_checks() {
    let report = fusion_report(FusionConfig { layers: 0, ..small_config() }, 30);
    assert!(report.passed);
}

#[test]
fn sign_flipped_backward_is_flagged() {
    let config = small_config();
    let samples = random_samples(&config, 2, 3);
    let model = FusionModel::<f64>::init(config, 7).unwrap();
    let mut obj = FusionObjective::new(model, samples.iter().collect()).unwrap();
    let target = obj.params().iter().position(|p| p.name == "classifier.weight").unwrap();
    obj.corrupt_group = Some(target);
    let report = gradcheck(&mut obj, 20, 1e-4, 1).unwrap();
    assert!(!report.passed);
    let failing: Vec<_> = report.failing().map(|g| g.name.as_str()).collect();
    assert_eq!(failing, vec!["classifier.weight"]);
}

#[test]
fn unlabeled_samples_cannot_be_checked() {
    let config = small_config();
    let mut samples = random_samples(&config, 1, 3);
    samples[0].label = None;
    let model = FusionModel::<f64>::init(config, 7).unwrap();
    assert!(matches!(FusionObjective::new(model, samples.iter().collect()), Err(CoreError::Unlabeled(_))));
}
