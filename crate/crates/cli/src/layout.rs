//! Output directory layout: `out_dir/{checkpoints,images,reports,logs}/<run-id>`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub struct Layout {
    pub checkpoints: PathBuf,
    pub images: PathBuf,
    pub reports: PathBuf,
    pub logs: PathBuf,
    pub data: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        let sub = |kind: &str| cfg.out_dir.join(kind).join(&cfg.run_id);
        Self {
            checkpoints: sub("checkpoints"),
            images: sub("images"),
            reports: sub("reports"),
            logs: sub("logs"),
            data: sub("data"),
        }
    }

    pub fn detector(&self) -> PathBuf {
        self.checkpoints.join("detector.ckpt")
    }

    pub fn imported_detectors(&self) -> PathBuf {
        self.checkpoints.join("detectors")
    }

    pub fn generator(&self) -> PathBuf {
        self.checkpoints.join("generator.ckpt")
    }

    pub fn visual(&self) -> PathBuf {
        self.checkpoints.join("visual.ckpt")
    }

    /// Directory holding one attacked image set (`camgan`, `pgd`, ...).
    pub fn attack_images(&self, attack: &str) -> PathBuf {
        self.images.join(attack)
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Echoes the merged config into each directory a command wrote to.
pub fn echo_config(cfg: &RunConfig, command: &str, dirs: &[&Path]) -> CliResult<()> {
    let text = cfg.to_json() + "\n";
    for d in dirs {
        write_text(&d.join(format!("{command}.config.json")), &text)?;
    }
    Ok(())
}

pub fn require(path: &Path, what: &str, producer: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(what, path, producer))
    }
}
