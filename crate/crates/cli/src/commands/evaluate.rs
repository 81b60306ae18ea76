use std::path::PathBuf;

use camo_core::discriminators::DetectorHandle;
use camo_core::manifest::Label;
use camo_core::metrics::{evaluate as evaluate_sets, grad_cam, robustness_suite, AccRow, AttackSet};
use serde::Serialize;

use super::attacks::{Baseline, CAMGAN};
use super::{ids, load_detector, load_detector_at, load_image_set, load_splits};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout::{echo_config, ensure_dir, write_json, write_jsonl, Layout};

/// Attack name for the unmodified evaluation images.
const CLEAN: &str = "clean";

fn eval_detectors(cfg: &RunConfig, layout: &Layout) -> CliResult<Vec<DetectorHandle>> {
    let mut paths: Vec<PathBuf> = cfg.eval_detectors.clone();
    if paths.is_empty() {
        let own = layout.detector();
        if own.exists() {
            paths.push(own);
        }
        if let Ok(entries) = std::fs::read_dir(layout.imported_detectors()) {
            let mut imported: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
                .collect();
            imported.sort();
            paths.extend(imported);
        }
        if paths.is_empty() {
            return Err(CliError::missing("detector checkpoint", &layout.detector(), "train-detector"));
        }
    }
    let detectors = paths
        .iter()
        .map(|p| load_detector_at(p, cfg))
        .collect::<CliResult<Vec<_>>>()?;
    let mut names: Vec<&str> = detectors.iter().map(DetectorHandle::name).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Config(format!(
            "two evaluation detectors are both named '{}'; rename one with `camo detector import`",
            w[0]
        )));
    }
    Ok(detectors)
}

/// ACC table for every detector × attack set × post-process, plus SSIM,
/// PSNR and FID per attack set. Baseline sets are included when present.
pub fn evaluate(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout::new(cfg);
    let detectors = eval_detectors(cfg, &layout)?;
    let splits = load_splits(cfg)?;
    let records = splits.eval();
    let clean: Vec<_> = records.iter().map(|r| r.image.clone()).collect();
    let mut sets = vec![(CLEAN, clean.clone())];
    sets.push((CAMGAN, load_image_set(&layout.attack_images(CAMGAN), records, "camouflage")?));
    for b in [Baseline::Pgd, Baseline::Handcrafted] {
        let dir = layout.attack_images(b.name());
        if dir.exists() {
            let producer = format!("baseline {}", b.name());
            sets.push((b.name(), load_image_set(&dir, records, &producer)?));
        }
    }
    let attacks: Vec<AttackSet> = sets.iter().map(|(name, images)| AttackSet { name, images }).collect();
    let refs: Vec<&DetectorHandle> = detectors.iter().collect();
    let config = serde_json::to_value(cfg).expect("config serializes");
    let (report, verdicts) = evaluate_sets(
        &refs,
        &clean,
        &ids(records),
        &attacks,
        &cfg.postprocesses()?,
        cfg.train.seed,
        config,
    )?;
    write_json(&layout.reports.join("metrics.json"), &report)?;
    write_jsonl(&layout.reports.join("verdicts.jsonl"), &verdicts)?;
    echo_config(cfg, "evaluate", &[&layout.reports])?;
    for r in &report.rows {
        println!(
            "{:<20} {:<12} {:<14} ACC {:.3} (n={})",
            r.detector, r.attack, r.postprocess, r.acc_real_as_real, r.n
        );
    }
    for q in &report.quality {
        println!(
            "{:<12} SSIM {:.4}  PSNR {:.2}  FID {:.3}",
            q.attack,
            q.mean_ssim,
            q.mean_psnr.as_f64(),
            q.fid.value
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct RobustnessRow {
    #[serde(flatten)]
    acc: AccRow,
    /// Difference to the unprocessed camouflaged ACC, when `none` is part
    /// of the suite.
    delta_vs_none: Option<f64>,
}

#[derive(Serialize)]
struct RobustnessReport {
    detector: String,
    rows: Vec<RobustnessRow>,
    max_abs_delta: Option<f64>,
}

/// Camouflaged-set ACC under each configured post-process.
pub fn robustness(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout::new(cfg);
    let d = load_detector(cfg, &layout)?;
    let splits = load_splits(cfg)?;
    let records = splits.eval();
    let images = load_image_set(&layout.attack_images(CAMGAN), records, "camouflage")?;
    let (rows, verdicts) = robustness_suite(&images, &ids(records), &d, CAMGAN, &cfg.postprocesses()?, cfg.train.seed)?;
    let base = rows.iter().find(|r| r.postprocess == "none").map(|r| r.acc_real_as_real);
    let rows: Vec<RobustnessRow> = rows
        .into_iter()
        .map(|acc| RobustnessRow {
            delta_vs_none: base.map(|b| acc.acc_real_as_real - b),
            acc,
        })
        .collect();
    let max_abs_delta = base.map(|_| {
        rows.iter()
            .filter_map(|r| r.delta_vs_none)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    });
    for r in &rows {
        println!("{:<14} ACC {:.3}", r.acc.postprocess, r.acc.acc_real_as_real);
    }
    write_json(
        &layout.reports.join("robustness.json"),
        &RobustnessReport {
            detector: d.name().to_string(),
            rows,
            max_abs_delta,
        },
    )?;
    write_jsonl(&layout.reports.join("robustness_verdicts.jsonl"), &verdicts)?;
    echo_config(cfg, "robustness", &[&layout.reports])?;
    Ok(())
}

#[derive(Serialize)]
struct CamRow {
    image_id: String,
    p_real_clean: f64,
    p_real_camouflaged: f64,
    /// Heatmap mass inside the face hull for the fake class.
    hull_mass_clean: f64,
    hull_mass_camouflaged: f64,
}

#[derive(Serialize)]
struct CamReport {
    detector: String,
    rows: Vec<CamRow>,
    /// Mean camouflaged hull mass over images the detector flags fake.
    mean_hull_mass_flagged: Option<f64>,
    flagged: usize,
}

/// Grad-CAM overlays for clean and camouflaged evaluation images
/// (at most `limit`), written as `<id>_clean.png` / `<id>_camgan.png`.
pub fn gradcam(cfg: &RunConfig, limit: Option<usize>) -> CliResult<()> {
    let layout = Layout::new(cfg);
    let d = load_detector(cfg, &layout)?;
    d.gradients()?;
    let splits = load_splits(cfg)?;
    let mut records = splits.eval();
    if let Some(n) = limit {
        records = &records[..n.min(records.len())];
    }
    let images = load_image_set(&layout.attack_images(CAMGAN), records, "camouflage")?;
    let dir = layout.images.join("gradcam");
    ensure_dir(&dir)?;
    let mut rows = Vec::with_capacity(records.len());
    for (rec, x) in records.iter().zip(&images) {
        let clean_map = grad_cam(&d, &rec.image, Label::Fake)?;
        let cam_map = grad_cam(&d, x, Label::Fake)?;
        clean_map.overlay(&rec.image, 0.5)?.save_png(&dir.join(format!("{}_clean.png", rec.source_id)))?;
        cam_map.overlay(x, 0.5)?.save_png(&dir.join(format!("{}_{CAMGAN}.png", rec.source_id)))?;
        rows.push(CamRow {
            image_id: rec.source_id.clone(),
            p_real_clean: d.predict(&rec.image)?,
            p_real_camouflaged: d.predict(x)?,
            hull_mass_clean: clean_map.mass_inside(&rec.hull_mask)?,
            hull_mass_camouflaged: cam_map.mass_inside(&rec.hull_mask)?,
        });
    }
    let flagged: Vec<f64> = rows
        .iter()
        .filter(|r| Label::from_probability(r.p_real_camouflaged) == Label::Fake)
        .map(|r| r.hull_mass_camouflaged)
        .collect();
    let report = CamReport {
        detector: d.name().to_string(),
        mean_hull_mass_flagged: (!flagged.is_empty()).then(|| flagged.iter().sum::<f64>() / flagged.len() as f64),
        flagged: flagged.len(),
        rows,
    };
    write_json(&layout.reports.join("gradcam.json"), &report)?;
    echo_config(cfg, "gradcam", &[&dir, &layout.reports])?;
    println!("wrote {} overlay pairs to {}", report.rows.len(), dir.display());
    Ok(())
}
