use std::path::{Path, PathBuf};

use camo_core::corpus::write_corpus;
use camo_core::landmarks::{load_face_record, save_landmarks};
use camo_core::manifest::{DatasetManifest, ManifestEntry};
use serde::Serialize;

use super::manifest_path;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout::{echo_config, ensure_dir, write_json, Layout};

pub fn synth_corpus(cfg: &RunConfig, dest: Option<PathBuf>) -> CliResult<()> {
    let dest = dest.unwrap_or_else(|| Layout::new(cfg).data);
    ensure_dir(&dest)?;
    let manifest = write_corpus(&dest, &cfg.corpus)?;
    echo_config(cfg, "synth-corpus", &[&dest])?;
    println!(
        "wrote {} faces and {}",
        manifest.entries.len(),
        dest.join("manifest.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PrepareFailure {
    image: PathBuf,
    error: String,
}

#[derive(Serialize)]
struct PrepareReport {
    prepared: usize,
    failures: Vec<PrepareFailure>,
}

/// Resizes every manifest entry to the working size and writes
/// `images/`, `landmarks/`, `masks/` and a new `manifest.json` under `dest`.
/// Outputs are named `NNNNN_<stem>` after the entry index.
pub fn prepare_data(cfg: &RunConfig, dest: Option<PathBuf>) -> CliResult<()> {
    let input = DatasetManifest::load(manifest_path(cfg)?)?;
    let layout = Layout::new(cfg);
    let dest = dest.unwrap_or_else(|| layout.data.clone());
    let dirs = ["images", "landmarks", "masks"].map(|d| dest.join(d));
    for d in &dirs {
        ensure_dir(d)?;
    }
    let mut out = DatasetManifest::default();
    let mut failures = Vec::new();
    for (i, entry) in input.entries.iter().enumerate() {
        let stem = entry
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let name = format!("{i:05}_{stem}");
        match prepare_one(entry, &name, &dirs, cfg.size) {
            Ok(e) => out.entries.push(e),
            Err(e) => {
                log::error!("{}: {e}", entry.image.display());
                failures.push(PrepareFailure {
                    image: entry.image.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    out.save(&dest.join("manifest.json"))?;
    let report = PrepareReport {
        prepared: out.entries.len(),
        failures,
    };
    write_json(&layout.reports.join("prepare-data.json"), &report)?;
    echo_config(cfg, "prepare-data", &[&dest, &layout.reports])?;
    println!("prepared {} of {} entries into {}", report.prepared, input.entries.len(), dest.display());
    if report.failures.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = report.failures.iter().map(|f| format!("{} ({})", f.image.display(), f.error)).collect();
        Err(CliError::Precondition(format!(
            "{} entries could not be prepared: {}",
            names.len(),
            names.join("; ")
        )))
    }
}

fn prepare_one(entry: &ManifestEntry, name: &str, dirs: &[PathBuf; 3], size: usize) -> camo_core::Result<ManifestEntry> {
    let rec = load_face_record(&entry.image, entry.landmarks.as_deref(), Some((size, size)))?;
    let rel = |kind: &str, ext: &str| Path::new(kind).join(format!("{name}.{ext}"));
    rec.image.save_png(&dirs[0].join(format!("{name}.png")))?;
    rec.hull_mask.save_png(&dirs[2].join(format!("{name}.png")))?;
    let landmarks = if entry.landmarks.is_some() {
        save_landmarks(&dirs[1].join(format!("{name}.json")), &rec.landmarks)?;
        Some(rel("landmarks", "json"))
    } else {
        None
    };
    Ok(ManifestEntry {
        image: rel("images", "png"),
        landmarks,
        split: entry.split,
        label: entry.label,
    })
}
