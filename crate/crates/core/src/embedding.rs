//! Modality-indexed embedding containers and in-memory samples.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};
use core::str::FromStr;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Modality {
    Face,
    Scene,
    Audio,
    Text,
}

impl Modality {
    pub const COUNT: usize = 4;
    pub const ALL: [Modality; 4] = [Modality::Face, Modality::Scene, Modality::Audio, Modality::Text];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Face => "face",
            Modality::Scene => "scene",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CoreError::InvalidConfig(alloc::format!("unknown modality `{s}`")))
    }
}

/// One value per modality, in the fixed order face, scene, audio, text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerModality<T> {
    pub face: T,
    pub scene: T,
    pub audio: T,
    pub text: T,
}

impl<T> PerModality<T> {
    pub fn from_fn(mut f: impl FnMut(Modality) -> T) -> Self {
        Self {
            face: f(Modality::Face),
            scene: f(Modality::Scene),
            audio: f(Modality::Audio),
            text: f(Modality::Text),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Modality, &T)> {
        Modality::ALL.into_iter().map(move |m| (m, &self[m]))
    }

    pub fn map<U>(&self, mut f: impl FnMut(Modality, &T) -> U) -> PerModality<U> {
        PerModality::from_fn(|m| f(m, &self[m]))
    }
}

impl<T> Index<Modality> for PerModality<T> {
    type Output = T;
    fn index(&self, m: Modality) -> &T {
        match m {
            Modality::Face => &self.face,
            Modality::Scene => &self.scene,
            Modality::Audio => &self.audio,
            Modality::Text => &self.text,
        }
    }
}

impl<T> IndexMut<Modality> for PerModality<T> {
    fn index_mut(&mut self, m: Modality) -> &mut T {
        match m {
            Modality::Face => &mut self.face,
            Modality::Scene => &mut self.scene,
            Modality::Audio => &mut self.audio,
            Modality::Text => &mut self.text,
        }
    }
}

/// A `rows × cols` block of 32-bit features for one modality: a frame or
/// time-step sequence, or a single video-level vector when `rows == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    modality: Option<Modality>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::EmptyEmbedding { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(CoreError::LengthMismatch { left: data.len(), right: rows * cols });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteEmbedding { index });
        }
        Ok(Self { rows, cols, data, modality: None })
    }

    pub fn vector(data: Vec<f32>) -> Result<Self> {
        let n = data.len();
        Self::new(1, n, data)
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = Some(modality);
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modality(&self) -> Option<Modality> {
        self.modality
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Devel,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Devel => "devel",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "devel" => Ok(Split::Devel),
            "test" => Ok(Split::Test),
            other => Err(CoreError::InvalidConfig(alloc::format!("unknown split `{other}`"))),
        }
    }
}

/// One video's video-level inputs. `mask[m]` marks modality `m` as
/// available; a masked modality may still carry (ignored) data, but an
/// unmasked one must have features.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    /// `None` for unlabeled test videos.
    pub label: Option<usize>,
    pub features: PerModality<Option<Vec<f32>>>,
    pub mask: PerModality<bool>,
}

impl Sample {
    /// Mask derived from which features are present.
    pub fn new(id: impl Into<String>, split: Split, label: Option<usize>, features: PerModality<Option<Vec<f32>>>) -> Self {
        let mask = features.map(|_, f| f.is_some());
        Self { id: id.into(), split, label, features, mask }
    }

    pub fn available(&self) -> usize {
        self.mask.iter().filter(|(_, &m)| m).count()
    }

    /// Features of modality `m` if it is unmasked.
    pub fn input(&self, m: Modality) -> Option<&[f32]> {
        if self.mask[m] {
            self.features[m].as_deref()
        } else {
            None
        }
    }

    /// Copy of the sample with every modality outside `keep` masked out.
    /// The underlying features are kept.
    pub fn restricted_to(&self, keep: &[Modality]) -> Sample {
        let mut s = self.clone();
        for m in Modality::ALL {
            if !keep.contains(&m) {
                s.mask[m] = false;
            }
        }
        s
    }
}
