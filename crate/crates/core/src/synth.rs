//! Synthetic cross-modal parity datasets.
//!
//! Every sample draws an independent sign `s_m = ±1` per modality and embeds
//! it as `amplitude · s_m · u_m + noise`, with `u_m` a fixed random unit
//! direction. The label is the parity of the two designated modalities'
//! signs, so each modality alone is independent of the label while the pair
//! determines it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::embedding::{Modality, PerModality, Sample, Split};
use crate::error::{CoreError, Result};
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_devel: usize,
    pub n_test: usize,
    pub dims: PerModality<usize>,
    pub seed: u64,
    /// Fraction of samples that lose exactly one random modality.
    pub drop_frac: f64,
    /// Standard deviation of the isotropic feature noise.
    pub feature_noise: f64,
    /// Probability of flipping a label after the parity rule.
    pub label_noise: f64,
    pub amplitude: f64,
    pub parity: [Modality; 2],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_devel: 0,
            n_test: 0,
            dims: PerModality::from_fn(|_| 16),
            seed: 7,
            drop_frac: 0.0,
            feature_noise: 1.0,
            label_noise: 0.0,
            amplitude: 3.0,
            parity: [Modality::Scene, Modality::Text],
        }
    }
}

impl SynthSpec {
    pub fn total(&self) -> usize {
        self.n_train + self.n_devel + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        if self.total() == 0 {
            return bad("synthetic dataset needs at least one sample".into());
        }
        for m in Modality::ALL {
            if self.dims[m] < 2 {
                return bad(format!("{m} dim must be at least 2, got {}", self.dims[m]));
            }
        }
        for (name, p) in [("drop_frac", self.drop_frac), ("label_noise", self.label_noise)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.feature_noise >= 0.0) || !self.feature_noise.is_finite() {
            return bad("feature_noise must be finite and >= 0".into());
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return bad("amplitude must be finite and > 0".into());
        }
        if self.parity[0] == self.parity[1] {
            return bad("parity needs two distinct modalities".into());
        }
        Ok(())
    }
}

/// Ground truth behind one generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLatent {
    pub id: String,
    pub signs: PerModality<i8>,
    /// Parity of the designated signs before label noise.
    pub clean_label: usize,
    pub label: usize,
    pub dropped: Option<Modality>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub samples: Vec<Sample>,
    pub latents: Vec<SynthLatent>,
}

pub fn parity_label(signs: &PerModality<i8>, parity: [Modality; 2]) -> usize {
    usize::from((signs[parity[0]] > 0) != (signs[parity[1]] > 0))
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = RngStream::with_stream(spec.seed, streams::SYNTH);
    let directions = PerModality::from_fn(|m| {
        let mut u: Vec<f64> = (0..spec.dims[m]).map(|_| rng.normal()).collect();
        let norm = libm::sqrt(u.iter().map(|v| v * v).sum::<f64>());
        u.iter_mut().for_each(|v| *v /= norm);
        u
    });

    let splits = [(Split::Train, spec.n_train), (Split::Devel, spec.n_devel), (Split::Test, spec.n_test)];
    let mut samples = Vec::with_capacity(spec.total());
    let mut latents = Vec::with_capacity(spec.total());
    for (split, n) in splits {
        for i in 0..n {
            let id = format!("{}_{i:05}", split.name());
            let signs = PerModality::from_fn(|_| if rng.bernoulli(0.5) { 1i8 } else { -1 });
            let clean_label = parity_label(&signs, spec.parity);
            let label = if rng.bernoulli(spec.label_noise) { 1 - clean_label } else { clean_label };
            let dropped = if rng.bernoulli(spec.drop_frac) { Some(Modality::ALL[rng.below(Modality::COUNT)]) } else { None };
            let features = PerModality::from_fn(|m| {
                let a = spec.amplitude * f64::from(signs[m]);
                let x: Vec<f32> = directions[m].iter().map(|&u| (a * u + spec.feature_noise * rng.normal()) as f32).collect();
                (dropped != Some(m)).then_some(x)
            });
            samples.push(Sample::new(id.clone(), split, Some(label), features));
            latents.push(SynthLatent { id, signs, clean_label, label, dropped });
        }
    }
    Ok(SynthDataset { spec: spec.clone(), samples, latents })
}

impl SynthDataset {
    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_parity_without_noise() {
        let spec = SynthSpec { n_train: 500, n_devel: 100, ..SynthSpec::default() };
        let data = generate(&spec).unwrap();
        for (s, l) in data.samples.iter().zip(&data.latents) {
            assert_eq!(s.label, Some(parity_label(&l.signs, spec.parity)));
            assert_eq!(s.id, l.id);
        }
    }

    #[test]
    fn same_spec_same_samples() {
        let spec = SynthSpec { drop_frac: 0.3, label_noise: 0.1, ..SynthSpec::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 8, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().samples, generate(&other).unwrap().samples);
    }

    #[test]
    fn drop_fraction_is_respected() {
        let spec = SynthSpec { n_train: 10_000, drop_frac: 0.2, dims: PerModality::from_fn(|_| 2), ..SynthSpec::default() };
        let data = generate(&spec).unwrap();
        let dropped = data.samples.iter().filter(|s| s.available() == 3).count();
        assert_eq!(data.samples.iter().filter(|s| s.available() < 3).count(), 0);
        assert!((1800..=2200).contains(&dropped), "{dropped}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for spec in [
            SynthSpec { n_train: 0, ..SynthSpec::default() },
            SynthSpec { dims: PerModality { face: 1, scene: 4, audio: 4, text: 4 }, ..SynthSpec::default() },
            SynthSpec { drop_frac: 1.5, ..SynthSpec::default() },
            SynthSpec { parity: [Modality::Face, Modality::Face], ..SynthSpec::default() },
        ] {
            assert!(matches!(generate(&spec), Err(CoreError::InvalidConfig(_))));
        }
    }
}
