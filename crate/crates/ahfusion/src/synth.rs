//! Writes a generated parity dataset to disk as EMB1 files plus a manifest.
//!
//! Layout under the output directory:
//! `manifest.json`, `emb/<id>_<modality>.emb`, `latents.csv` (the signs and
//! labels behind every sample) and `synth.json` (the generating parameters).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ahfusion_core::synth::{generate, SynthDataset, SynthSpec};
use ahfusion_core::{EmbeddingMatrix, Modality, PerModality};
use serde::Serialize;

use crate::emb_file::write_embedding_file;
use crate::error::{Error, Result};
use crate::manifest::{write_manifest, Manifest, SampleEntry, SampleFiles, MANIFEST_FILE, MANIFEST_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub samples: usize,
    /// Samples with exactly one modality removed.
    pub dropped: usize,
}

pub fn write_dataset(dir: impl AsRef<Path>, data: &SynthDataset) -> Result<SynthSummary> {
    let dir = dir.as_ref();
    let emb = dir.join("emb");
    fs::create_dir_all(&emb).map_err(|e| Error::io(&emb, e))?;
    let mut entries = Vec::with_capacity(data.samples.len());
    for s in &data.samples {
        let mut files = PerModality::from_fn(|_| None);
        for m in Modality::ALL {
            let Some(x) = s.input(m) else { continue };
            let rel = format!("emb/{}_{}.emb", s.id, m);
            let matrix = EmbeddingMatrix::vector(x.to_vec())?.with_modality(m);
            write_embedding_file(dir.join(&rel), &matrix)?;
            files[m] = Some(rel);
        }
        entries.push(SampleEntry {
            id: s.id.clone(),
            split: s.split,
            label: s.label,
            files: SampleFiles::from_per_modality(files),
        });
    }
    let manifest = Manifest { version: MANIFEST_VERSION.into(), modalities: data.spec.dims, samples: entries };
    let manifest_path = dir.join(MANIFEST_FILE);
    write_manifest(&manifest_path, &manifest)?;

    let mut csv = String::from("id,split,face,scene,audio,text,clean_label,label,dropped\n");
    for (s, l) in data.samples.iter().zip(&data.latents) {
        let sg = &l.signs;
        let dropped = l.dropped.map_or("", |m| m.name());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            l.id, s.split, sg.face, sg.scene, sg.audio, sg.text, l.clean_label, l.label, dropped
        );
    }
    let latents = dir.join("latents.csv");
    fs::write(&latents, csv).map_err(|e| Error::io(&latents, e))?;
    let spec_path = dir.join("synth.json");
    let spec_json = serde_json::to_string_pretty(&data.spec).expect("spec serializes") + "\n";
    fs::write(&spec_path, spec_json).map_err(|e| Error::io(&spec_path, e))?;

    Ok(SynthSummary {
        manifest: manifest_path,
        samples: data.samples.len(),
        dropped: data.latents.iter().filter(|l| l.dropped.is_some()).count(),
    })
}

pub fn generate_synthetic_dataset(dir: impl AsRef<Path>, spec: &SynthSpec) -> Result<SynthSummary> {
    write_dataset(dir, &generate(spec)?)
}
