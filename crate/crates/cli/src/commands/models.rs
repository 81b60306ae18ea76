use std::path::Path;

use camo_core::backbone::{generator_arch, visual_arch};
use camo_core::checkpoint::Checkpoint;
use camo_core::discriminators::{train_desk_detector, DetectorHandle, VisualDiscriminator};
use camo_core::generator::GeneratorModel;
use camo_core::trainer::train_camgan;
use serde::Serialize;

use super::{detector_path, load_detector, load_splits};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout::{echo_config, ensure_dir, require, write_json, write_jsonl, Layout};

pub fn train_detector(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout::new(cfg);
    let splits = load_splits(cfg)?;
    let (handle, report) = train_desk_detector(&splits.train, &splits.test, &cfg.detector)?;
    ensure_dir(&layout.checkpoints)?;
    handle.to_checkpoint().save(&layout.detector())?;
    write_json(&layout.reports.join("detector.json"), &report)?;
    echo_config(cfg, "train-detector", &[&layout.checkpoints, &layout.reports])?;
    println!(
        "detector '{}' balanced accuracy {:.4} on {} held-out reals; saved {}",
        cfg.detector.name,
        report.balanced_accuracy,
        report.heldout_images,
        layout.detector().display()
    );
    Ok(())
}

/// Registers an external detector checkpoint under `name` in the run's
/// `checkpoints/<run-id>/detectors/` directory.
pub fn import_detector(cfg: &RunConfig, source: &Path, name: &str, gradients: bool) -> CliResult<()> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(CliError::Config(format!("detector name '{name}' is not a plain file name")));
    }
    require(source, "detector checkpoint to import", "train-detector")?;
    let handle = DetectorHandle::from_checkpoint(&Checkpoint::load(source)?)?;
    let imported = handle.relabeled(name, format!("imported from {}", source.display()), gradients);
    let layout = Layout::new(cfg);
    let dir = layout.imported_detectors();
    ensure_dir(&dir)?;
    let dest = dir.join(format!("{name}.ckpt"));
    imported.to_checkpoint().save(&dest)?;
    echo_config(cfg, "detector-import", &[&layout.checkpoints])?;
    println!(
        "imported '{name}' (fingerprint {}, gradients {}) as {}",
        imported.fingerprint(),
        if gradients { "exposed" } else { "hidden" },
        dest.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    detector: &'a str,
    detector_fingerprint: &'a str,
    selected_step: usize,
    validation: &'a [camo_core::trainer::ValidationPoint],
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout::new(cfg);
    let d = load_detector(cfg, &layout)?;
    let splits = load_splits(cfg)?;
    let g = GeneratorModel::new(generator_arch(cfg.size), cfg.ranges.clone(), cfg.generator_seed)?;
    let v = if cfg.train.visual_enabled {
        Some(VisualDiscriminator::new(
            visual_arch(cfg.size),
            cfg.visual_seed,
            cfg.train.visual_lr,
            cfg.train.optimizer,
        )?)
    } else {
        None
    };
    log::info!(
        "training against '{}' from {} on {} reals",
        d.name(),
        detector_path(cfg, &layout).display(),
        splits.train.len()
    );
    let outcome = train_camgan(&splits.train, splits.validation(), g, v, &d, &cfg.train)?;
    ensure_dir(&layout.checkpoints)?;
    let provenance = format!("trained against detector {}", d.fingerprint());
    outcome.generator.to_checkpoint("camgan-generator", &provenance).save(&layout.generator())?;
    if let Some(vd) = &outcome.visual {
        vd.to_checkpoint("camgan-visual", &provenance).save(&layout.visual())?;
    }
    write_jsonl(&layout.logs.join("train.jsonl"), &outcome.log)?;
    write_json(
        &layout.reports.join("train.json"),
        &TrainSummary {
            detector: d.name(),
            detector_fingerprint: d.fingerprint(),
            selected_step: outcome.selected_step,
            validation: &outcome.validation,
        },
    )?;
    echo_config(cfg, "train", &[&layout.checkpoints, &layout.reports, &layout.logs])?;
    let best = outcome
        .validation
        .iter()
        .find(|p| p.step == outcome.selected_step)
        .expect("selected step was validated");
    println!(
        "selected step {}: validation success {:.3}, SSIM {:.4}; saved {}",
        best.step,
        best.success_rate,
        best.mean_ssim,
        layout.generator().display()
    );
    Ok(())
}
