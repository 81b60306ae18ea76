use camo_core::camouflage::camouflage as apply_camouflage;
use camo_core::landmarks::FaceRecord;
use camo_core::metrics::{handcrafted_params, pgd_attack};
use camo_core::params::CamouflageParams;
use camo_core::trainer::{camouflage_set, mix_seed};
use camo_core::ImageF;
use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{load_detector, load_generator, load_splits};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::layout::{echo_config, ensure_dir, write_jsonl, Layout};

/// Image-set name the learned camouflage is stored under.
pub const CAMGAN: &str = "camgan";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Pgd,
    Handcrafted,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pgd => "pgd",
            Self::Handcrafted => "handcrafted",
        }
    }
}

#[derive(Serialize)]
struct ParamsLine<'a> {
    image_id: &'a str,
    params: &'a CamouflageParams,
}

fn save_set(
    cfg: &RunConfig,
    command: &str,
    attack: &str,
    records: &[FaceRecord],
    images: &[ImageF],
    params: Option<&[CamouflageParams]>,
) -> CliResult<()> {
    let layout = Layout::new(cfg);
    let dir = layout.attack_images(attack);
    ensure_dir(&dir)?;
    for (rec, img) in records.iter().zip(images) {
        img.save_png(&dir.join(format!("{}.png", rec.source_id)))?;
    }
    if let Some(params) = params {
        let lines: Vec<ParamsLine> = records
            .iter()
            .zip(params)
            .map(|(r, p)| ParamsLine {
                image_id: &r.source_id,
                params: p,
            })
            .collect();
        write_jsonl(&dir.join("params.jsonl"), &lines)?;
    }
    echo_config(cfg, command, &[&dir])?;
    println!("wrote {} images to {}", images.len(), dir.display());
    Ok(())
}

/// Camouflages the evaluation images with the trained generator, or with
/// identity parameters when `identity` is set.
pub fn camouflage(cfg: &RunConfig, identity: bool) -> CliResult<()> {
    let splits = load_splits(cfg)?;
    let records = splits.eval();
    let (images, params): (Vec<ImageF>, Vec<CamouflageParams>) = if identity {
        let p = CamouflageParams::identity();
        records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let x = apply_camouflage(rec, &p, mix_seed(cfg.train.seed, u64::MAX, i as u64))?.quantized();
                Ok((x, p.clone()))
            })
            .collect::<camo_core::Result<Vec<_>>>()?
            .into_iter()
            .unzip()
    } else {
        let g = load_generator(cfg, &Layout::new(cfg))?;
        camouflage_set(&g, records, cfg.train.seed)?.into_iter().unzip()
    };
    save_set(cfg, "camouflage", CAMGAN, records, &images, Some(&params))
}

pub fn baseline(cfg: &RunConfig, kind: Baseline) -> CliResult<()> {
    let splits = load_splits(cfg)?;
    let records = splits.eval();
    match kind {
        Baseline::Pgd => {
            let d = load_detector(cfg, &Layout::new(cfg))?;
            let images = records
                .iter()
                .map(|r| Ok(pgd_attack(&d, &r.image, &cfg.pgd)?.quantized()))
                .collect::<camo_core::Result<Vec<_>>>()?;
            save_set(cfg, "baseline-pgd", kind.name(), records, &images, None)
        }
        Baseline::Handcrafted => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
            let mut params = Vec::with_capacity(records.len());
            let mut images = Vec::with_capacity(records.len());
            for (i, rec) in records.iter().enumerate() {
                let p = handcrafted_params(&mut rng, &cfg.ranges);
                images.push(apply_camouflage(rec, &p, mix_seed(cfg.train.seed, 0, i as u64))?.quantized());
                params.push(p);
            }
            save_set(cfg, "baseline-handcrafted", kind.name(), records, &images, Some(&params))
        }
    }
}
