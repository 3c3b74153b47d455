//! Dataset manifest: a JSON file listing samples and, per modality, the
//! EMB1 file holding that sample's embedding (or `null`).
//!
//! ```json
//! {
//!   "version": "1",
//!   "modalities": {"face": 16, "scene": 16, "audio": 16, "text": 16},
//!   "samples": [
//!     {"id": "v001", "split": "train", "label": 1,
//!      "files": {"face": "emb/v001_face.emb", "scene": null, "audio": "...", "text": "..."}}
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. Mask bits come from
//! which files actually exist; a referenced file that is missing masks the
//! modality, while a file that exists but fails to parse is an error.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ahfusion_core::aggregation::mean_pool;
use ahfusion_core::{Modality, PerModality, Sample, Split};
use serde::{Deserialize, Serialize};

use crate::emb_file::{read_embedding_file, EmbError};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub modalities: PerModality<usize>,
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
    pub label: Option<usize>,
    pub files: SampleFiles,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleFiles {
    pub face: Option<String>,
    pub scene: Option<String>,
    pub audio: Option<String>,
    pub text: Option<String>,
}

impl SampleFiles {
    pub fn get(&self, m: Modality) -> Option<&str> {
        match m {
            Modality::Face => self.face.as_deref(),
            Modality::Scene => self.scene.as_deref(),
            Modality::Audio => self.audio.as_deref(),
            Modality::Text => self.text.as_deref(),
        }
    }

    pub fn from_per_modality(files: PerModality<Option<String>>) -> Self {
        Self { face: files.face, scene: files.scene, audio: files.audio, text: files.text }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} does not match the schema: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported manifest version `{0}`")]
    Version(String),
    #[error("declared {modality} dim is 0")]
    ZeroDim { modality: Modality },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("sample `{sample}`: label {label} is not 0 or 1")]
    Label { sample: String, label: usize },
    #[error("sample `{sample}`: {modality} embedding has {actual} columns, manifest declares {expected}")]
    DimMismatch { sample: String, modality: Modality, expected: usize, actual: usize },
    #[error("sample `{sample}`: no modality is available")]
    NoModalities { sample: String },
    #[error("sample `{sample}`: {modality} file {path}: {source}")]
    Embedding {
        sample: String,
        modality: Modality,
        path: PathBuf,
        #[source]
        source: EmbError,
    },
}

/// A manifest together with its fully loaded samples, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn dims(&self) -> PerModality<usize> {
        self.manifest.modalities
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

/// `path` may name the manifest file or the directory containing it.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn parse_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|source| ManifestError::Schema { path: path.into(), source })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(ManifestError::Version(manifest.version));
    }
    for (modality, &d) in manifest.modalities.iter() {
        if d == 0 {
            return Err(ManifestError::ZeroDim { modality });
        }
    }
    let mut seen = HashSet::new();
    for s in &manifest.samples {
        if !seen.insert(s.id.as_str()) {
            return Err(ManifestError::DuplicateId(s.id.clone()));
        }
        if let Some(label) = s.label.filter(|&l| l > 1) {
            return Err(ManifestError::Label { sample: s.id.clone(), label });
        }
    }
    Ok(manifest)
}

/// Parses the manifest and loads every referenced embedding. Sequences with
/// more than one row are mean-pooled to a single video-level vector.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = manifest_path(path.as_ref());
    let manifest = parse_manifest(&path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let mut features = PerModality::from_fn(|_| None);
        for m in Modality::ALL {
            let Some(rel) = entry.files.get(m) else { continue };
            let file = root.join(rel);
            if !file.is_file() {
                continue;
            }
            let matrix = match read_embedding_file(&file) {
                Ok(matrix) => matrix,
                Err(Error::Embedding { source, .. }) => {
                    return Err(ManifestError::Embedding { sample: entry.id.clone(), modality: m, path: file, source }.into())
                }
                Err(e) => return Err(e),
            };
            let expected = manifest.modalities[m];
            if matrix.cols() != expected {
                return Err(ManifestError::DimMismatch {
                    sample: entry.id.clone(),
                    modality: m,
                    expected,
                    actual: matrix.cols(),
                }
                .into());
            }
            features[m] = Some(if matrix.rows() == 1 { matrix.into_data() } else { mean_pool(&matrix)?.data });
        }
        let sample = Sample::new(entry.id.clone(), entry.split, entry.label, features);
        if sample.available() == 0 {
            return Err(ManifestError::NoModalities { sample: entry.id.clone() }.into());
        }
        samples.push(sample);
    }
    Ok(Dataset { root, manifest, samples })
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
