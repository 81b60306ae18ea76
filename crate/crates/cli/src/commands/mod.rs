//! One function per subcommand plus the loaders they share.

mod attacks;
mod data;
mod evaluate;
mod models;

pub use attacks::{baseline, camouflage, Baseline};
pub use data::{prepare_data, synth_corpus};
pub use evaluate::{evaluate, gradcam, robustness};
pub use models::{import_detector, train, train_detector};

use std::path::{Path, PathBuf};

use camo_core::checkpoint::Checkpoint;
use camo_core::discriminators::DetectorHandle;
use camo_core::generator::GeneratorModel;
use camo_core::landmarks::FaceRecord;
use camo_core::manifest::{DatasetManifest, Label, Split};
use camo_core::ImageF;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout::{require, Layout};

/// Real faces of a manifest, split into training, validation and
/// evaluation sets. Validation is the first `train.validation_size` test
/// reals; evaluation is the remainder.
pub struct Splits {
    pub train: Vec<FaceRecord>,
    pub test: Vec<FaceRecord>,
    validation_size: usize,
}

impl Splits {
    pub fn validation(&self) -> &[FaceRecord] {
        &self.test[..self.validation_size]
    }

    pub fn eval(&self) -> &[FaceRecord] {
        &self.test[self.validation_size..]
    }
}

fn manifest_path(cfg: &RunConfig) -> CliResult<&Path> {
    let path = cfg
        .manifest
        .as_deref()
        .ok_or_else(|| CliError::Config("no manifest configured; pass --manifest <path>".into()))?;
    require(path, "dataset manifest", "prepare-data")?;
    Ok(path)
}

pub fn load_splits(cfg: &RunConfig) -> CliResult<Splits> {
    let manifest = DatasetManifest::load(manifest_path(cfg)?)?;
    let size = Some((cfg.size, cfg.size));
    let train = manifest.load_records(Split::Train, Label::Real, size)?;
    let test = manifest.load_records(Split::Test, Label::Real, size)?;
    if test.len() < 2 {
        return Err(CliError::Precondition(format!(
            "the manifest has {} test reals; at least 2 are needed for validation and evaluation",
            test.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = test.iter().find(|r| !seen.insert(r.source_id.as_str())) {
        return Err(CliError::Precondition(format!(
            "two test images share the file stem '{}'; run `camo prepare-data` to give them unique names",
            dup.source_id
        )));
    }
    let validation_size = cfg.train.validation_size.clamp(1, test.len() - 1);
    if validation_size != cfg.train.validation_size {
        log::warn!(
            "validation slice shrunk to {validation_size} images so that {} remain for evaluation",
            test.len() - validation_size
        );
    }
    Ok(Splits {
        train,
        test,
        validation_size,
    })
}

fn check_size(what: &str, dims: (usize, usize), cfg: &RunConfig) -> CliResult<()> {
    if dims != (cfg.size, cfg.size) {
        return Err(CliError::Precondition(format!(
            "{what} expects {}x{} inputs but the working size is {}",
            dims.0, dims.1, cfg.size
        )));
    }
    Ok(())
}

pub fn load_detector_at(path: &Path, cfg: &RunConfig) -> CliResult<DetectorHandle> {
    require(path, "detector checkpoint", "train-detector")?;
    let d = DetectorHandle::from_checkpoint(&Checkpoint::load(path)?)?;
    check_size(&format!("detector '{}'", d.name()), d.input_dims(), cfg)?;
    Ok(d)
}

pub fn detector_path(cfg: &RunConfig, layout: &Layout) -> PathBuf {
    cfg.detector_checkpoint.clone().unwrap_or_else(|| layout.detector())
}

pub fn load_detector(cfg: &RunConfig, layout: &Layout) -> CliResult<DetectorHandle> {
    load_detector_at(&detector_path(cfg, layout), cfg)
}

pub fn load_generator(cfg: &RunConfig, layout: &Layout) -> CliResult<GeneratorModel> {
    let path = cfg.generator_checkpoint.clone().unwrap_or_else(|| layout.generator());
    require(&path, "generator checkpoint", "train")?;
    let g = GeneratorModel::from_checkpoint(&Checkpoint::load(&path)?, None, None)?;
    let a = g.network().architecture();
    check_size("generator", (a.height, a.width), cfg)?;
    Ok(g)
}

/// Loads `<dir>/<source_id>.png` for each record.
pub fn load_image_set(dir: &Path, records: &[FaceRecord], producer: &str) -> CliResult<Vec<ImageF>> {
    require(dir, "image set", producer)?;
    records
        .iter()
        .map(|r| {
            let path = dir.join(format!("{}.png", r.source_id));
            require(&path, "image", producer)?;
            let img = ImageF::load(&path)?;
            if img.dims() != r.dims() {
                return Err(CliError::Precondition(format!(
                    "{} is {}x{}, expected {}x{}; rerun `camo {producer}` with the current size",
                    path.display(),
                    img.height(),
                    img.width(),
                    r.dims().0,
                    r.dims().1
                )));
            }
            Ok(img)
        })
        .collect()
}

pub fn ids(records: &[FaceRecord]) -> Vec<String> {
    records.iter().map(|r| r.source_id.clone()).collect()
}
