//! CamGAN optimisation: the detector-spoofing loss, the visual-constraint
//! loss, the sigmoid penalty and the penalty-scaled generator update,
//! alternated with visual-discriminator steps.
//!
//! The generator step is
//! `θ ← θ − η · (e^{σ(L_ds)} − λ·e^{σ(L_vi)}) · ∇θ L_vc`, with the penalty
//! evaluated per image. `L_vi` inside the penalty is `log V(x*)` on the
//! camouflaged image, and `0` when the visual discriminator is disabled.

use camo_nn::Optimizer;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camouflage::camouflage;
use crate::discriminators::{
    heldout_accuracy, make_pseudo_fake, DetectorHandle, Strength, VisualBatch, VisualDiscriminator,
};
use crate::error::{CamoError, Result};
use crate::generator::{GeneratorModel, ParamGenerator};
use crate::image::ImageF;
use crate::landmarks::FaceRecord;
use crate::metrics::ssim;
use crate::optimizer::{AnyOptimizer, OptimizerKind};
use crate::params::CamouflageParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Generator step size η.
    pub lr: f64,
    /// Penalty weight λ.
    pub lambda: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Generator steps per alternation round.
    pub generator_steps: usize,
    /// Visual-discriminator steps per alternation round.
    pub visual_steps: usize,
    pub seed: u64,
    /// Floor inside every logarithm.
    pub eps_log: f64,
    pub optimizer: OptimizerKind,
    pub visual_lr: f64,
    /// Weight of the `μ_gn²` pull (0 disables it).
    pub mu_pull: f64,
    pub visual_enabled: bool,
    /// Visual-discriminator steps run before the first generator step.
    pub visual_warmup: usize,
    pub checkpoint_every: usize,
    pub validation_size: usize,
    /// SSIM level below which validation candidates are penalised.
    pub ssim_floor: f64,
    /// Detector balanced accuracy required before training starts.
    pub detector_gate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            lambda: 1.0,
            batch_size: 8,
            max_steps: 600,
            generator_steps: 1,
            visual_steps: 1,
            seed: 23,
            eps_log: 1e-6,
            optimizer: OptimizerKind::RmsProp,
            visual_lr: 3e-3,
            mu_pull: 1e-3,
            visual_enabled: true,
            visual_warmup: 0,
            checkpoint_every: 100,
            validation_size: 64,
            ssim_floor: 0.95,
            detector_gate: 0.90,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CamoError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if !(self.eps_log > 0.0 && self.eps_log < 1.0) {
            return bad(format!("eps_log {} must lie in (0, 1)", self.eps_log));
        }
        if !(self.visual_lr > 0.0 && self.visual_lr.is_finite()) {
            return bad(format!("visual learning rate {}", self.visual_lr));
        }
        if self.batch_size == 0 || self.generator_steps == 0 || self.checkpoint_every == 0 {
            return bad("batch size, generator steps and checkpoint cadence must be positive".into());
        }
        if self.mu_pull < 0.0 {
            return bad(format!("mu_pull {} must be non-negative", self.mu_pull));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamMeans {
    pub mu_gn: f64,
    pub sigma_gn: f64,
    pub k_gf: f64,
    pub sigma_gf: f64,
    pub k_bl: f64,
    pub sigma_bl: f64,
}

impl ParamMeans {
    pub fn of(params: &[CamouflageParams]) -> Self {
        let n = params.len().max(1) as f64;
        let mean = |f: fn(&CamouflageParams) -> f64| params.iter().map(f).sum::<f64>() / n;
        Self {
            mu_gn: mean(|p| p.mu_gn),
            sigma_gn: mean(|p| p.sigma_gn),
            k_gf: mean(|p| p.k_gf as f64),
            sigma_gf: mean(|p| p.sigma_gf),
            k_bl: mean(|p| p.k_bl as f64),
            sigma_bl: mean(|p| p.sigma_bl),
        }
    }
}

/// One generator step, averaged over its batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub l_ds: f64,
    /// The visual term used inside the penalty.
    pub l_vi: f64,
    pub l_vc: f64,
    pub penalty: f64,
    pub param_means: ParamMeans,
    pub detector_p_real: f64,
    pub visual_p_real: Option<f64>,
    /// V-side objective of the following visual step, if one ran.
    pub visual_objective: Option<f64>,
}

/// `log p` with `p` clamped to `[eps, 1]`.
pub fn loss_ds(p_real: f64, eps: f64) -> f64 {
    p_real.clamp(eps, 1.0).ln()
}

/// The visual term fed to the penalty: `log V(x*)` clamped like `loss_ds`.
pub fn loss_vi_generator(v_p_real: f64, eps: f64) -> f64 {
    v_p_real.clamp(eps, 1.0).ln()
}

/// `e^{σ(L_ds)} − λ·e^{σ(L_vi)}`.
pub fn penalty(l_ds: f64, l_vi: f64, lambda: f64) -> f64 {
    let s = crate::discriminators::sigmoid;
    s(l_ds).exp() - lambda * s(l_vi).exp()
}

/// Deterministic per-sample seed.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Output of [`generator_update_step`].
pub struct StepOutput {
    pub record: TrainLogRecord,
    pub camouflaged: Vec<ImageF>,
}

/// Renders the batch, scores it with `d` (and `v`), and applies the
/// penalty-scaled update to θ through `opt`.
#[allow(clippy::too_many_arguments)]
pub fn generator_update_step<G: ParamGenerator>(
    g: &mut G,
    opt: &mut AnyOptimizer,
    batch: &[&FaceRecord],
    v: Option<&VisualDiscriminator>,
    d: &DetectorHandle,
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(CamoError::EmptyBatch("generator"));
    }
    let n = batch.len() as f64;
    let mut grads = vec![0.0; g.theta().len()];
    let mut sums = [0.0; 5];
    let mut v_sum = 0.0;
    let mut params = Vec::with_capacity(batch.len());
    let mut camouflaged = Vec::with_capacity(batch.len());
    for (i, rec) in batch.iter().enumerate() {
        let p = g.generate_params(&rec.image)?;
        let x = camouflage(rec, &p, mix_seed(cfg.seed, step as u64, i as u64))?.quantized();
        let p_real = d.predict(&x)?;
        let l_ds = loss_ds(p_real, cfg.eps_log);
        let l_vi = match v {
            Some(v) => {
                let pv = v.predict(&x)?;
                v_sum += pv;
                loss_vi_generator(pv, cfg.eps_log)
            }
            None => 0.0,
        };
        let pen = penalty(l_ds, l_vi, cfg.lambda);
        let l_vc = g.accumulate_loss_vc_grad(&rec.image, cfg.eps_log, pen / n, &mut grads)?;
        g.accumulate_mu_pull_grad(&rec.image, cfg.mu_pull, 1.0 / n, &mut grads)?;
        for (s, val) in sums.iter_mut().zip([l_ds, l_vi, l_vc, pen, p_real]) {
            *s += val / n;
        }
        params.push(p);
        camouflaged.push(x);
    }
    if let Some(bad) = sums.iter().chain(&grads).find(|x| !x.is_finite()) {
        return Err(CamoError::ModelState(format!(
            "non-finite value {bad} at step {step}; losses [l_ds, l_vi, l_vc, penalty, p_real] = {sums:?}"
        )));
    }
    opt.step(g.theta_mut(), &grads);
    Ok(StepOutput {
        record: TrainLogRecord {
            step,
            l_ds: sums[0],
            l_vi: sums[1],
            l_vc: sums[2],
            penalty: sums[3],
            param_means: ParamMeans::of(&params),
            detector_p_real: sums[4],
            visual_p_real: v.map(|_| v_sum / n),
            visual_objective: None,
        },
        camouflaged,
    })
}

/// Validation summary for one candidate checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub step: usize,
    pub success_rate: f64,
    pub mean_ssim: f64,
    /// `success_rate − max(0, ssim_floor − mean_ssim)`.
    pub score: f64,
}

/// Camouflages each record with `g` and a per-index seed; returns the images
/// and the applied parameters.
pub fn camouflage_set<G: ParamGenerator>(g: &G, records: &[FaceRecord], seed: u64) -> Result<Vec<(ImageF, CamouflageParams)>> {
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let p = g.generate_params(&rec.image)?;
            Ok((camouflage(rec, &p, mix_seed(seed, u64::MAX, i as u64))?.quantized(), p))
        })
        .collect()
}

pub fn validate_generator<G: ParamGenerator>(
    g: &G,
    d: &DetectorHandle,
    records: &[FaceRecord],
    cfg: &TrainConfig,
    step: usize,
) -> Result<ValidationPoint> {
    if records.is_empty() {
        return Err(CamoError::EmptyBatch("validation"));
    }
    let mut fooled = 0usize;
    let mut ssim_sum = 0.0;
    for (rec, (x, _)) in records.iter().zip(camouflage_set(g, records, cfg.seed)?) {
        if d.predict(&x)? < 0.5 {
            fooled += 1;
        }
        ssim_sum += ssim(&x, &rec.image)?;
    }
    let n = records.len() as f64;
    let success_rate = fooled as f64 / n;
    let mean_ssim = ssim_sum / n;
    Ok(ValidationPoint {
        step,
        success_rate,
        mean_ssim,
        score: success_rate - (cfg.ssim_floor - mean_ssim).max(0.0),
    })
}

fn visual_step(
    vd: &mut VisualDiscriminator,
    batch: &[&FaceRecord],
    camouflaged: &[ImageF],
    cfg: &TrainConfig,
    step: usize,
    k: usize,
) -> Result<crate::discriminators::VisualStepReport> {
    let fakes: Vec<ImageF> = batch
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let tier = if i.wrapping_add(step) % 2 == 0 { Strength::Med } else { Strength::High };
            make_pseudo_fake(rec, tier, mix_seed(cfg.seed ^ 0x5EED, step as u64, i.wrapping_add(k) as u64)).map(|x| x.quantized())
        })
        .collect::<Result<_>>()?;
    let reals: Vec<ImageF> = batch.iter().map(|r| r.image.clone()).collect();
    vd.train_step(&VisualBatch {
        real: &reals,
        fake: &fakes,
        camouflaged,
    })
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// The generator with the best validation score.
    pub generator: GeneratorModel,
    pub visual: Option<VisualDiscriminator>,
    pub log: Vec<TrainLogRecord>,
    pub validation: Vec<ValidationPoint>,
    pub selected_step: usize,
}

/// Whether `candidate` should replace `incumbent` as the selected checkpoint:
/// a higher score wins, and equal scores go to the higher mean SSIM.
pub fn prefer(candidate: &ValidationPoint, incumbent: &ValidationPoint) -> bool {
    candidate.score > incumbent.score
        || (candidate.score == incumbent.score && candidate.mean_ssim > incumbent.mean_ssim)
}

/// Alternates generator and visual-discriminator steps for `cfg.max_steps`
/// generator steps, validating every `cfg.checkpoint_every` steps.
pub fn train_camgan(
    train: &[FaceRecord],
    validation: &[FaceRecord],
    mut g: GeneratorModel,
    mut v: Option<VisualDiscriminator>,
    d: &DetectorHandle,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(CamoError::Precondition("train split has no reals".into()));
    }
    if validation.is_empty() {
        return Err(CamoError::Precondition("validation slice is empty".into()));
    }
    if cfg.visual_enabled && v.is_none() {
        return Err(CamoError::Config("visual discriminator enabled but not provided".into()));
    }
    if !cfg.visual_enabled {
        v = None;
    }
    let validation = &validation[..cfg.validation_size.clamp(1, validation.len())];
    let fingerprint = d.fingerprint().to_string();
    let (real_acc, fake_acc) = heldout_accuracy(d.classifier(), validation, cfg.seed)?;
    let balanced = 0.5 * (real_acc + fake_acc);
    if balanced < cfg.detector_gate {
        return Err(CamoError::Gate(format!(
            "detector '{}' has balanced accuracy {balanced:.4} on the validation slice, below {:.2}",
            d.name(),
            cfg.detector_gate
        )));
    }

    let mut opt = AnyOptimizer::new(cfg.optimizer, cfg.lr, g.theta().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    let mut next_batch = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut out = Vec::with_capacity(cfg.batch_size);
        while out.len() < cfg.batch_size.min(train.len()) {
            if cursor >= order.len() {
                order = (0..train.len()).collect();
                order.shuffle(rng);
                cursor = 0;
            }
            out.push(order[cursor]);
            cursor += 1;
        }
        out
    };

    if let Some(vd) = v.as_mut() {
        for w in 0..cfg.visual_warmup {
            let idx = next_batch(&mut rng);
            let batch: Vec<&FaceRecord> = idx.iter().map(|&i| &train[i]).collect();
            let camouflaged = batch
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let p = g.generate_params(&rec.image)?;
                    Ok(camouflage(rec, &p, mix_seed(cfg.seed ^ 0x3A3A, w as u64, i as u64))?.quantized())
                })
                .collect::<Result<Vec<_>>>()?;
            let report = visual_step(vd, &batch, &camouflaged, cfg, usize::MAX - w, 0)?;
            log::debug!("visual warm-up {w}: objective {:.4}", report.loss);
        }
    }

    let mut log = Vec::with_capacity(cfg.max_steps);
    let mut points = vec![validate_generator(&g, d, validation, cfg, 0)?];
    let mut best = (points[0].clone(), g.clone());
    let mut step = 0usize;
    while step < cfg.max_steps {
        for _ in 0..cfg.generator_steps {
            if step >= cfg.max_steps {
                break;
            }
            let idx = next_batch(&mut rng);
            let batch: Vec<&FaceRecord> = idx.iter().map(|&i| &train[i]).collect();
            let out = generator_update_step(&mut g, &mut opt, &batch, v.as_ref(), d, cfg, step)?;
            let mut record = out.record;
            if let Some(vd) = v.as_mut() {
                for k in 0..cfg.visual_steps {
                    let report = visual_step(vd, &batch, &out.camouflaged, cfg, step, k)?;
                    record.visual_objective.get_or_insert(report.loss);
                }
            }
            log::debug!(
                "step {step}: l_ds {:.3} l_vi {:.3} penalty {:.3} D {:.3}",
                record.l_ds,
                record.l_vi,
                record.penalty,
                record.detector_p_real
            );
            log.push(record);
            step += 1;
            if step % cfg.checkpoint_every == 0 || step == cfg.max_steps {
                let p = validate_generator(&g, d, validation, cfg, step)?;
                log::info!(
                    "validation at step {step}: success {:.3}, SSIM {:.4}",
                    p.success_rate,
                    p.mean_ssim
                );
                if prefer(&p, &best.0) {
                    best = (p.clone(), g.clone());
                }
                points.push(p);
            }
        }
    }
    if d.current_fingerprint() != fingerprint {
        return Err(CamoError::ModelState(format!("detector '{}' changed during training", d.name())));
    }
    Ok(TrainOutcome {
        generator: best.1,
        visual: v,
        log,
        validation: points,
        selected_step: best.0.step,
    })
}
