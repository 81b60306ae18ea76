//! Dataset manifests: which images belong to which split and label.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CamoError, Result};
use crate::landmarks::{load_face_record, FaceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Ground-truth label. `0 = fake`, `1 = real` everywhere in the toolkit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Real,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Fake => 0.0,
            Label::Real => 1.0,
        }
    }

    /// Decision at threshold 0.5, ties counted as real.
    pub fn from_probability(p_real: f64) -> Self {
        if p_real >= 0.5 {
            Label::Real
        } else {
            Label::Fake
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub landmarks: Option<PathBuf>,
    pub split: Split,
    pub label: Label,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Reads a manifest; relative paths are resolved against the manifest's
    /// directory and every referenced file must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CamoError::io(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| CamoError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut manifest.entries {
            e.image = resolve(base, &e.image);
            e.landmarks = e.landmarks.as_ref().map(|l| resolve(base, l));
            for p in std::iter::once(&e.image).chain(e.landmarks.as_ref()) {
                if !p.exists() {
                    return Err(CamoError::Precondition(format!(
                        "{}: referenced file {} does not exist",
                        path.display(),
                        p.display()
                    )));
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| CamoError::io(path, e))
    }

    /// Entries of one split and label, in manifest order.
    pub fn select(&self, split: Split, label: Label) -> impl Iterator<Item = &ManifestEntry> {
        self.entries
            .iter()
            .filter(move |e| e.split == split && e.label == label)
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.select(split, label).count()
    }

    /// Loads the records of one split/label at the given working size.
    pub fn load_records(
        &self,
        split: Split,
        label: Label,
        size: Option<(usize, usize)>,
    ) -> Result<Vec<FaceRecord>> {
        self.select(split, label)
            .map(|e| load_face_record(&e.image, e.landmarks.as_deref(), size))
            .collect()
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
