use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::config::FusionConfig;
use super::prototype::{
    diversity_backward, diversity_penalty, prototype_backward, prototype_scores, NormalizedBank,
    PrototypeScores,
};
use crate::embedding::{Modality, PerModality, Sample};
use crate::error::{CoreError, Result};
use crate::nn::{
    cross_entropy_smoothed, gelu, gelu_backward, softmax, AttentionCache, Dropout, DropoutMask,
    LayerNorm, LayerNormCache, Linear, Mode, MultiHeadAttention, Parameterized,
};
use crate::real::Real;
use crate::rng::{streams, RngStream};
use crate::tensor::{Matrix, Param};

/// `linear → layer norm → GELU → dropout` into the shared latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector<T> {
    pub linear: Linear<T>,
    pub norm: LayerNorm<T>,
}

/// Pre-norm Transformer encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub norm1: LayerNorm<T>,
    pub attention: MultiHeadAttention<T>,
    pub norm2: LayerNorm<T>,
    pub ff_in: Linear<T>,
    pub ff_out: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<T> {
    pub config: FusionConfig,
    pub projectors: PerModality<Projector<T>>,
    /// `M × d`, added to the modality tokens.
    pub modality_embedding: Param<T>,
    pub cls_token: Option<Param<T>>,
    pub layers: Vec<EncoderLayer<T>>,
    pub classifier: Linear<T>,
    /// `C × K × d`.
    pub prototypes: Param<T>,
}

struct ProjectorCache<T> {
    samples: Vec<usize>,
    input: Matrix<T>,
    norm: LayerNormCache<T>,
    pre_gelu: Matrix<T>,
    dropout: DropoutMask<T>,
}

struct LayerCache<T> {
    norm1: LayerNormCache<T>,
    attention: AttentionCache<T>,
    norm2: LayerNormCache<T>,
    ff_input: Matrix<T>,
    pre_gelu: Matrix<T>,
    dropout: DropoutMask<T>,
    hidden: Matrix<T>,
}

/// Everything one batched forward pass produced. The public fields are the
/// intermediate quantities of the model; the rest feeds `backward`.
pub struct ForwardPass<T> {
    pub batch: usize,
    pub tokens: usize,
    /// Token validity, `batch × tokens`.
    pub mask: Vec<bool>,
    /// Projected modality tokens (zero rows where masked), `batch·M × d`.
    pub projected: Matrix<T>,
    pub input_tokens: Matrix<T>,
    pub output_tokens: Matrix<T>,
    pub fused: Matrix<T>,
    pub logits: Matrix<T>,
    pub proto_logits: Matrix<T>,
    projector_caches: Vec<Option<ProjectorCache<T>>>,
    layer_caches: Vec<LayerCache<T>>,
    bank: NormalizedBank<T>,
    proto_scores: Vec<PrototypeScores<T>>,
}

/// Loss terms averaged over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub proto: f64,
    pub div: f64,
}

/// Per-sample composite objective `L_cls + λ_proto·L_proto + λ_div·L_div`.
/// Returns the breakdown and the gradients for both logit vectors.
pub fn total_loss<T: Real>(
    logits: &[T],
    proto_logits: &[T],
    div: T,
    label: usize,
    config: &FusionConfig,
) -> Result<(LossBreakdown, Vec<T>, Vec<T>)> {
    let (cls, dcls) = cross_entropy_smoothed(logits, label, config.label_smoothing)?;
    let (proto, dproto) = cross_entropy_smoothed(proto_logits, label, config.proto_label_smoothing)?;
    let total = cls.to_f64() + config.lambda_proto * proto.to_f64() + config.lambda_div * div.to_f64();
    Ok((
        LossBreakdown { total, cls: cls.to_f64(), proto: proto.to_f64(), div: div.to_f64() },
        dcls,
        dproto,
    ))
}

/// Mean of the unmasked output tokens of every sample (or the CLS row
/// when `cls` is set). `tokens` rows per sample.
pub fn masked_mean_pool<T: Real>(z: &Matrix<T>, mask: &[bool], tokens: usize, cls: bool) -> Result<Matrix<T>> {
    let batch = z.rows() / tokens;
    let d = z.cols();
    let mut out = Matrix::zeros(batch, d);
    for b in 0..batch {
        let r0 = b * tokens;
        if cls {
            out.row_mut(b).copy_from_slice(z.row(r0));
            continue;
        }
        let count = mask[r0..r0 + tokens].iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(CoreError::AllMasked);
        }
        let o = out.row_mut(b);
        for t in 0..tokens {
            if mask[r0 + t] {
                for (a, &v) in o.iter_mut().zip(z.row(r0 + t)) {
                    *a += v;
                }
            }
        }
        let inv = T::ONE / T::from_usize(count);
        o.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

impl<T: Real> Projector<T> {
    fn zeros(m: Modality, d_in: usize, config: &FusionConfig) -> Self {
        Self {
            linear: Linear::zeros(&format!("projector.{m}.linear"), d_in, config.d_model),
            norm: LayerNorm::new(&format!("projector.{m}.norm"), config.d_model, config.layer_norm_eps),
        }
    }
}

impl<T: Real> EncoderLayer<T> {
    fn zeros(i: usize, config: &FusionConfig) -> Result<Self> {
        let d = config.d_model;
        let eps = config.layer_norm_eps;
        Ok(Self {
            norm1: LayerNorm::new(&format!("layers.{i}.norm1"), d, eps),
            attention: MultiHeadAttention::zeros(&format!("layers.{i}.attention"), d, config.heads)?,
            norm2: LayerNorm::new(&format!("layers.{i}.norm2"), d, eps),
            ff_in: Linear::zeros(&format!("layers.{i}.ff_in"), d, config.ff_hidden()),
            ff_out: Linear::zeros(&format!("layers.{i}.ff_out"), config.ff_hidden(), d),
        })
    }

    fn forward(
        &self,
        z: &Matrix<T>,
        tokens: usize,
        mask: &[bool],
        dropout: &Dropout,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Matrix<T>, LayerCache<T>)> {
        let (a1, norm1) = self.norm1.forward(z)?;
        let (att, attention) = self.attention.forward(&a1, tokens, mask)?;
        let mut z1 = z.clone();
        z1.add_assign(&att);
        let (ff_input, norm2) = self.norm2.forward(&z1)?;
        let pre_gelu = self.ff_in.forward(&ff_input)?;
        let (hidden, dmask) = dropout.forward(gelu(&pre_gelu), mode, rng);
        let f = self.ff_out.forward(&hidden)?;
        z1.add_assign(&f);
        Ok((z1, LayerCache { norm1, attention, norm2, ff_input, pre_gelu, dropout: dmask, hidden }))
    }

    fn backward(&mut self, cache: &LayerCache<T>, dz2: &Matrix<T>) -> Matrix<T> {
        let dhidden = self.ff_out.backward(&cache.hidden, dz2);
        let dpre = gelu_backward(&cache.pre_gelu, &cache.dropout.backward(dhidden));
        let dff_input = self.ff_in.backward(&cache.ff_input, &dpre);
        let mut dz1 = dz2.clone();
        dz1.add_assign(&self.norm2.backward(&cache.norm2, &dff_input));
        let da1 = self.attention.backward(&cache.attention, &dz1);
        let mut dz = dz1;
        dz.add_assign(&self.norm1.backward(&cache.norm1, &da1));
        dz
    }
}

impl<T: Real> FusionModel<T> {
    /// Correctly shaped model with zero weights and unit layer-norm gains.
    pub fn zeros(config: FusionConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let c = config.num_classes;
        let layers = (0..config.layers).map(|i| EncoderLayer::zeros(i, &config)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            projectors: PerModality::from_fn(|m| Projector::zeros(m, config.input_dims[m], &config)),
            modality_embedding: Param::zeros("modality_embedding", &[Modality::COUNT, d]),
            cls_token: config.use_cls_token.then(|| Param::zeros("cls_token", &[d])),
            layers,
            classifier: Linear::zeros("classifier", d, c),
            prototypes: Param::zeros("prototypes", &[c, config.prototypes_per_class, d]),
            config,
        })
    }

    /// Seeded initialization: Glorot-uniform projector, attention and
    /// feed-forward weights, zero biases, classifier weights and the
    /// modality and CLS embeddings from N(0, 0.02²), prototypes from N(0, 1).
    pub fn init(config: FusionConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = RngStream::with_stream(seed, streams::INIT);
        let d = model.config.d_model;
        let hidden = model.config.ff_hidden();
        for m in Modality::ALL {
            let d_in = model.config.input_dims[m];
            model.projectors[m].linear = Linear::glorot(&format!("projector.{m}.linear"), d_in, d, &mut rng);
        }
        for v in model.modality_embedding.value.iter_mut() {
            *v = T::from_f64(0.02 * rng.normal());
        }
        if let Some(cls) = model.cls_token.as_mut() {
            for v in cls.value.iter_mut() {
                *v = T::from_f64(0.02 * rng.normal());
            }
        }
        for (i, layer) in model.layers.iter_mut().enumerate() {
            layer.attention =
                MultiHeadAttention::glorot(&format!("layers.{i}.attention"), d, model.config.heads, &mut rng)?;
            layer.ff_in = Linear::glorot(&format!("layers.{i}.ff_in"), d, hidden, &mut rng);
            layer.ff_out = Linear::glorot(&format!("layers.{i}.ff_out"), hidden, d, &mut rng);
        }
        for v in model.classifier.weight.value.iter_mut() {
            *v = T::from_f64(0.02 * rng.normal());
        }
        for v in model.prototypes.value.iter_mut() {
            *v = T::from_f64(rng.normal());
        }
        Ok(model)
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Real>(&self) -> FusionModel<U> {
        let mut out = FusionModel::<U>::zeros(self.config.clone()).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.available() == 0 {
            return Err(CoreError::AllMasked);
        }
        for m in Modality::ALL {
            if !s.mask[m] {
                continue;
            }
            let Some(f) = s.features[m].as_ref() else {
                return Err(CoreError::Shape(format!("sample `{}`: {m} is unmasked but has no features", s.id)));
            };
            let want = self.config.input_dims[m];
            if f.len() != want {
                return Err(CoreError::Shape(format!(
                    "sample `{}`: {m} embedding has {} values, model expects {want}",
                    s.id,
                    f.len()
                )));
            }
        }
        Ok(())
    }

    fn projector_forward(
        &self,
        samples: &[&Sample],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Matrix<T>, Vec<Option<ProjectorCache<T>>>)> {
        let d = self.config.d_model;
        let dropout = Dropout::new(self.config.dropout)?;
        let mut u = Matrix::zeros(samples.len() * Modality::COUNT, d);
        let mut caches = Vec::with_capacity(Modality::COUNT);
        for m in Modality::ALL {
            let present: Vec<usize> = (0..samples.len()).filter(|&b| samples[b].mask[m]).collect();
            if present.is_empty() {
                caches.push(None);
                continue;
            }
            let d_in = self.config.input_dims[m];
            let mut data = Vec::with_capacity(present.len() * d_in);
            for &b in &present {
                let f = samples[b].input(m).expect("checked by check_sample");
                data.extend(f.iter().map(|&v| T::from_f32(v)));
            }
            let input = Matrix::from_vec(present.len(), d_in, data);
            let p = &self.projectors[m];
            let h = p.linear.forward(&input)?;
            let (pre_gelu, norm) = p.norm.forward(&h)?;
            let (out, dmask) = dropout.forward(gelu(&pre_gelu), mode, rng);
            for (r, &b) in present.iter().enumerate() {
                u.row_mut(b * Modality::COUNT + m.index()).copy_from_slice(out.row(r));
            }
            caches.push(Some(ProjectorCache { samples: present, input, norm, pre_gelu, dropout: dmask }));
        }
        Ok((u, caches))
    }

    /// Modality tokens `U` (`M × d`) of one sample; masked rows are zero.
    pub fn project_modalities(&self, sample: &Sample, mode: Mode, rng: &mut RngStream) -> Result<Matrix<T>> {
        self.check_sample(sample)?;
        Ok(self.projector_forward(&[sample], mode, rng)?.0)
    }

    /// `Z⁽⁰⁾ = U + E_mod`, with the CLS row prepended when enabled. `u`
    /// stacks `M` rows per sample; `modality_mask` is aligned with it.
    /// Returns the tokens and the extended mask.
    pub fn assemble_tokens(&self, u: &Matrix<T>, modality_mask: &[bool]) -> (Matrix<T>, Vec<bool>) {
        let d = self.config.d_model;
        let tokens = self.config.tokens_per_sample();
        let batch = u.rows() / Modality::COUNT;
        let off = tokens - Modality::COUNT;
        let mut z = Matrix::zeros(batch * tokens, d);
        let mut mask = vec![true; batch * tokens];
        for b in 0..batch {
            if let Some(cls) = &self.cls_token {
                z.row_mut(b * tokens).copy_from_slice(&cls.value);
            }
            for m in 0..Modality::COUNT {
                let row = z.row_mut(b * tokens + off + m);
                let e = &self.modality_embedding.value[m * d..(m + 1) * d];
                for ((o, &x), &em) in row.iter_mut().zip(u.row(b * Modality::COUNT + m)).zip(e) {
                    *o = x + em;
                }
                mask[b * tokens + off + m] = modality_mask[b * Modality::COUNT + m];
            }
        }
        (z, mask)
    }

    /// Runs the encoder stack over token blocks of `tokens_per_sample` rows.
    pub fn encode(&self, z0: &Matrix<T>, mask: &[bool], mode: Mode, rng: &mut RngStream) -> Result<Matrix<T>> {
        Ok(self.encode_with_cache(z0, mask, mode, rng)?.0)
    }

    fn encode_with_cache(
        &self,
        z0: &Matrix<T>,
        mask: &[bool],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Matrix<T>, Vec<LayerCache<T>>)> {
        let tokens = self.config.tokens_per_sample();
        let dropout = Dropout::new(self.config.dropout)?;
        let mut z = z0.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&z, tokens, mask, &dropout, mode, rng)?;
            z = next;
            caches.push(cache);
        }
        Ok((z, caches))
    }

    /// Full forward pass over a batch, keeping what `backward` needs.
    pub fn forward_batch(&self, samples: &[&Sample], mode: Mode, rng: &mut RngStream) -> Result<ForwardPass<T>> {
        if samples.is_empty() {
            return Err(CoreError::EmptyInput);
        }
        for s in samples {
            self.check_sample(s)?;
        }
        let tokens = self.config.tokens_per_sample();
        let cfg = &self.config;
        let (projected, projector_caches) = self.projector_forward(samples, mode, rng)?;
        let modality_mask: Vec<bool> =
            samples.iter().flat_map(|s| Modality::ALL.map(|m| s.mask[m])).collect();
        let (input_tokens, mask) = self.assemble_tokens(&projected, &modality_mask);
        let (output_tokens, layer_caches) = self.encode_with_cache(&input_tokens, &mask, mode, rng)?;
        let fused = masked_mean_pool(&output_tokens, &mask, tokens, cfg.use_cls_token)?;
        let logits = self.classifier.forward(&fused)?;
        let bank = NormalizedBank::new(&self.prototypes.value, cfg.num_classes, cfg.prototypes_per_class, cfg.d_model);
        let proto_scores: Vec<_> =
            (0..samples.len()).map(|b| prototype_scores(fused.row(b), &bank, cfg.temperature)).collect();
        let mut proto_logits = Matrix::zeros(samples.len(), cfg.num_classes);
        for (b, s) in proto_scores.iter().enumerate() {
            proto_logits.row_mut(b).copy_from_slice(&s.logits);
        }
        Ok(ForwardPass {
            batch: samples.len(),
            tokens,
            mask,
            projected,
            input_tokens,
            output_tokens,
            fused,
            logits,
            proto_logits,
            projector_caches,
            layer_caches,
            bank,
            proto_scores,
        })
    }

    /// Class probabilities from the main classifier. The prototype head only
    /// shapes training and never enters this output.
    pub fn forward(&self, sample: &Sample, mode: Mode, rng: &mut RngStream) -> Result<Vec<f64>> {
        let pass = self.forward_batch(&[sample], mode, rng)?;
        let logits: Vec<f64> = pass.logits.row(0).iter().map(|v| v.to_f64()).collect();
        Ok(softmax(&logits))
    }

    /// Batch loss without touching gradients.
    pub fn loss(&self, pass: &ForwardPass<T>, labels: &[usize]) -> Result<LossBreakdown> {
        let div = if self.config.lambda_div > 0.0 { diversity_penalty(&pass.bank) } else { T::ZERO };
        let mut acc = LossBreakdown::default();
        for (b, &label) in labels.iter().enumerate() {
            let (l, _, _) = total_loss(pass.logits.row(b), pass.proto_logits.row(b), div, label, &self.config)?;
            acc.total += l.total;
            acc.cls += l.cls;
            acc.proto += l.proto;
        }
        let n = labels.len() as f64;
        acc.div = div.to_f64();
        acc.cls /= n;
        acc.proto /= n;
        acc.total = acc.total / n;
        Ok(acc)
    }

    /// Backpropagates the batch-mean loss and accumulates into every
    /// parameter's gradient. Returns the loss that was differentiated.
    pub fn backward(&mut self, pass: &ForwardPass<T>, labels: &[usize]) -> Result<LossBreakdown> {
        if labels.len() != pass.batch {
            return Err(CoreError::LengthMismatch { left: labels.len(), right: pass.batch });
        }
        let cfg = self.config.clone();
        let batch = pass.batch;
        let d = cfg.d_model;
        let inv_b = T::ONE / T::from_usize(batch);
        let lambda_proto = T::from_f64(cfg.lambda_proto);
        let div = if cfg.lambda_div > 0.0 { diversity_penalty(&pass.bank) } else { T::ZERO };

        let mut acc = LossBreakdown::default();
        let mut dlogits = Matrix::zeros(batch, cfg.num_classes);
        let mut dproto = Matrix::zeros(batch, cfg.num_classes);
        for (b, &label) in labels.iter().enumerate() {
            let (l, gcls, gproto) = total_loss(pass.logits.row(b), pass.proto_logits.row(b), div, label, &cfg)?;
            acc.total += l.total;
            acc.cls += l.cls;
            acc.proto += l.proto;
            for (o, g) in dlogits.row_mut(b).iter_mut().zip(gcls) {
                *o = g * inv_b;
            }
            for (o, g) in dproto.row_mut(b).iter_mut().zip(gproto) {
                *o = g * lambda_proto * inv_b;
            }
        }
        let n = batch as f64;
        acc.div = div.to_f64();
        acc.cls /= n;
        acc.proto /= n;
        acc.total /= n;

        // heads
        let mut dfused = self.classifier.backward(&pass.fused, &dlogits);
        let mut dbank = vec![T::ZERO; self.prototypes.len()];
        if cfg.lambda_proto > 0.0 {
            for b in 0..batch {
                prototype_backward(
                    pass.fused.row(b),
                    &pass.proto_scores[b],
                    &pass.bank,
                    cfg.temperature,
                    dproto.row(b),
                    dfused.row_mut(b),
                    &mut dbank,
                );
            }
        }
        if cfg.lambda_div > 0.0 {
            diversity_backward(&pass.bank, T::from_f64(cfg.lambda_div), &mut dbank);
        }
        pass.bank.backward(&self.prototypes.value, &dbank, &mut self.prototypes.grad);

        // pooling
        let tokens = pass.tokens;
        let mut dz = Matrix::zeros(batch * tokens, d);
        for b in 0..batch {
            let r0 = b * tokens;
            if cfg.use_cls_token {
                dz.row_mut(r0).copy_from_slice(dfused.row(b));
                continue;
            }
            let count = pass.mask[r0..r0 + tokens].iter().filter(|&&m| m).count();
            let inv = T::ONE / T::from_usize(count);
            for t in 0..tokens {
                if pass.mask[r0 + t] {
                    for (o, &g) in dz.row_mut(r0 + t).iter_mut().zip(dfused.row(b)) {
                        *o = g * inv;
                    }
                }
            }
        }

        // encoder
        for (layer, cache) in self.layers.iter_mut().zip(&pass.layer_caches).rev() {
            dz = layer.backward(cache, &dz);
        }

        // token assembly
        let off = tokens - Modality::COUNT;
        let mut du = Matrix::zeros(batch * Modality::COUNT, d);
        for b in 0..batch {
            if let Some(cls) = self.cls_token.as_mut() {
                for (g, &v) in cls.grad.iter_mut().zip(dz.row(b * tokens)) {
                    *g += v;
                }
            }
            for m in 0..Modality::COUNT {
                let row = dz.row(b * tokens + off + m);
                for (g, &v) in self.modality_embedding.grad[m * d..(m + 1) * d].iter_mut().zip(row) {
                    *g += v;
                }
                du.row_mut(b * Modality::COUNT + m).copy_from_slice(row);
            }
        }

        // projectors
        for (m, cache) in Modality::ALL.into_iter().zip(&pass.projector_caches) {
            let Some(cache) = cache else { continue };
            let mut dout = Matrix::zeros(cache.samples.len(), d);
            for (r, &b) in cache.samples.iter().enumerate() {
                dout.row_mut(r).copy_from_slice(du.row(b * Modality::COUNT + m.index()));
            }
            let p = &mut self.projectors[m];
            let dpre = gelu_backward(&cache.pre_gelu, &cache.dropout.backward(dout));
            let dh = p.norm.backward(&cache.norm, &dpre);
            p.linear.accumulate(&cache.input, &dh);
        }
        Ok(acc)
    }

    /// Eval-mode class probabilities for many samples, computed in chunks.
    /// Each row depends only on its own sample, so chunking does not change
    /// the result.
    pub fn predict(&self, samples: &[&Sample], chunk: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = RngStream::with_stream(0, streams::DROPOUT);
        let mut out = Vec::with_capacity(samples.len());
        for part in samples.chunks(chunk.max(1)) {
            let pass = self.forward_batch(part, Mode::Eval, &mut rng)?;
            for b in 0..part.len() {
                let logits: Vec<f64> = pass.logits.row(b).iter().map(|v| v.to_f64()).collect();
                out.push(softmax(&logits));
            }
        }
        Ok(out)
    }
}

impl<T> Parameterized<T> for Projector<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.linear.params();
        v.extend(self.norm.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.linear.params_mut();
        v.extend(self.norm.params_mut());
        v
    }
}

impl<T> Parameterized<T> for EncoderLayer<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.norm1.params();
        v.extend(self.attention.params());
        v.extend(self.norm2.params());
        v.extend(self.ff_in.params());
        v.extend(self.ff_out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.norm1.params_mut();
        v.extend(self.attention.params_mut());
        v.extend(self.norm2.params_mut());
        v.extend(self.ff_in.params_mut());
        v.extend(self.ff_out.params_mut());
        v
    }
}

impl<T> Parameterized<T> for FusionModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        v.extend(self.projectors.face.params());
        v.extend(self.projectors.scene.params());
        v.extend(self.projectors.audio.params());
        v.extend(self.projectors.text.params());
        v.push(&self.modality_embedding);
        if let Some(cls) = &self.cls_token {
            v.push(cls);
        }
        for layer in &self.layers {
            v.extend(layer.params());
        }
        v.extend(self.classifier.params());
        v.push(&self.prototypes);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        let PerModality { face, scene, audio, text } = &mut self.projectors;
        v.extend(face.params_mut());
        v.extend(scene.params_mut());
        v.extend(audio.params_mut());
        v.extend(text.params_mut());
        v.push(&mut self.modality_embedding);
        if let Some(cls) = &mut self.cls_token {
            v.push(cls);
        }
        for layer in &mut self.layers {
            v.extend(layer.params_mut());
        }
        v.extend(self.classifier.params_mut());
        v.push(&mut self.prototypes);
        v
    }
}
