//! The visual discriminator V, frozen detectors D, pseudo-fake generation and
//! desk-scale detector training.
//!
//! Every classifier here emits one logit `z`; the probability of the input
//! being real is `σ(z)` (label 0 = fake, 1 = real).

use camo_nn::{Architecture, Network, Optimizer, RmsProp};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camouflage::camouflage;
use crate::checkpoint::{Checkpoint, CheckpointHeader, ModelRole};
use crate::error::{CamoError, Result};
use crate::image::ImageF;
use crate::landmarks::FaceRecord;
use crate::params::{CamouflageParams, ParamRanges};
use crate::optimizer::{AnyOptimizer, OptimizerKind};
use crate::postprocess::PostProcess;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−[y log σ(z) + (1−y) log(1−σ(z))]`, evaluated without overflow.
pub fn bce_with_logit(z: f64, target: f64) -> f64 {
    z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
}

/// A single-logit convolutional classifier.
#[derive(Clone, Debug)]
pub struct Classifier {
    net: Network,
}

/// Pieces needed for Grad-CAM: last-block activations and the gradient of
/// the logit with respect to them, both channel-major.
pub struct ActivationGrad {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub activation: Vec<f64>,
    pub gradient: Vec<f64>,
    pub logit: f64,
}

impl Classifier {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        Self::from_network(Network::new(arch, seed)?)
    }

    pub fn from_network(net: Network) -> Result<Self> {
        let a = net.architecture();
        if a.outputs != 1 || a.channels != 3 {
            return Err(CamoError::Config(format!(
                "classifier '{}' needs 3 input channels and 1 output, has {} and {}",
                a.name, a.channels, a.outputs
            )));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    pub fn input_dims(&self) -> (usize, usize) {
        let a = self.net.architecture();
        (a.height, a.width)
    }

    fn input(&self, img: &ImageF) -> Result<Vec<f64>> {
        let (h, w) = self.input_dims();
        if img.dims() != (h, w) {
            return Err(CamoError::shape(
                format!("{h}x{w}"),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        Ok(img.to_chw().into_iter().map(|v| v - 0.5).collect())
    }

    pub fn logit(&self, img: &ImageF) -> Result<f64> {
        Ok(self.net.forward(&self.input(img)?)?.outputs()[0])
    }

    /// Probability that `img` is real.
    pub fn predict(&self, img: &ImageF) -> Result<f64> {
        Ok(sigmoid(self.logit(img)?))
    }

    /// Penultimate (globally pooled) features.
    pub fn features(&self, img: &ImageF) -> Result<Vec<f64>> {
        Ok(self.net.forward(&self.input(img)?)?.features().to_vec())
    }

    /// Adds `scale · ∂BCE(z, target)/∂θ` into `grads`; returns the loss and
    /// the logit.
    pub fn accumulate_bce(&self, img: &ImageF, target: f64, scale: f64, grads: &mut [f64]) -> Result<(f64, f64)> {
        let trace = self.net.forward(&self.input(img)?)?;
        let z = trace.outputs()[0];
        self.net.backward(&trace, &[scale * (sigmoid(z) - target)], grads, false)?;
        Ok((bce_with_logit(z, target), z))
    }

    /// Logit and `∂z/∂x` in the image's interleaved layout.
    pub fn logit_input_gradient(&self, img: &ImageF) -> Result<(f64, Vec<f64>)> {
        let trace = self.net.forward(&self.input(img)?)?;
        let mut scratch = vec![0.0; self.net.param_count()];
        let back = self.net.backward(&trace, &[1.0], &mut scratch, true)?;
        let chw = back.input.expect("input gradient requested");
        let (h, w) = self.input_dims();
        let mut hwc = vec![0.0; h * w * 3];
        for c in 0..3 {
            for i in 0..h * w {
                hwc[i * 3 + c] = chw[c * h * w + i];
            }
        }
        Ok((trace.outputs()[0], hwc))
    }

    pub fn activation_gradient(&self, img: &ImageF) -> Result<ActivationGrad> {
        let trace = self.net.forward(&self.input(img)?)?;
        let mut scratch = vec![0.0; self.net.param_count()];
        let back = self.net.backward(&trace, &[1.0], &mut scratch, false)?;
        let (channels, height, width) = self.net.last_activation_shape();
        Ok(ActivationGrad {
            channels,
            height,
            width,
            activation: trace.last_activation().to_vec(),
            gradient: back.last_activation,
            logit: trace.outputs()[0],
        })
    }
}

/// A frozen real/fake detector. Parameters cannot be changed after
/// construction; [`DetectorHandle::fingerprint`] identifies them.
#[derive(Clone, Debug)]
pub struct DetectorHandle {
    name: String,
    provenance: String,
    gradient_access: bool,
    clf: Classifier,
    fingerprint: String,
}

impl DetectorHandle {
    pub fn new(
        name: impl Into<String>,
        provenance: impl Into<String>,
        net: Network,
        gradient_access: bool,
    ) -> Result<Self> {
        let fingerprint = net.fingerprint();
        Ok(Self {
            name: name.into(),
            provenance: provenance.into(),
            gradient_access,
            clf: Classifier::from_network(net)?,
            fingerprint,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect(ModelRole::Detector, None, None)?;
        Self::new(
            ckpt.header.name.clone(),
            ckpt.header.provenance.clone(),
            ckpt.network()?,
            ckpt.header.gradient_access,
        )
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let net = self.clf.network();
        Checkpoint::new(
            CheckpointHeader {
                role: ModelRole::Detector,
                name: self.name.clone(),
                provenance: self.provenance.clone(),
                architecture: net.architecture().clone(),
                ranges: None,
                gradient_access: self.gradient_access,
                param_count: net.param_count(),
            },
            net.params().to_vec(),
        )
        .expect("network parameters match their architecture")
    }

    /// Same parameters, renamed, optionally with gradients hidden.
    pub fn relabeled(&self, name: impl Into<String>, provenance: impl Into<String>, gradient_access: bool) -> Self {
        Self {
            name: name.into(),
            provenance: provenance.into(),
            gradient_access,
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn has_gradient_access(&self) -> bool {
        self.gradient_access
    }

    pub fn input_dims(&self) -> (usize, usize) {
        self.clf.input_dims()
    }

    /// Probability that `img` is real.
    pub fn predict(&self, img: &ImageF) -> Result<f64> {
        self.clf.predict(img)
    }

    pub fn features(&self, img: &ImageF) -> Result<Vec<f64>> {
        self.clf.features(img)
    }

    /// The underlying classifier for prediction-only internal use.
    pub(crate) fn classifier(&self) -> &Classifier {
        &self.clf
    }

    /// White-box access for PGD and Grad-CAM.
    pub fn gradients(&self) -> Result<&Classifier> {
        if self.gradient_access {
            Ok(&self.clf)
        } else {
            Err(CamoError::Capability(self.name.clone()))
        }
    }

    /// SHA-256 of the parameter vector at load time.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Recomputes the parameter hash; equal to [`Self::fingerprint`] unless
    /// memory was corrupted.
    pub fn current_fingerprint(&self) -> String {
        self.clf.network().fingerprint()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Low,
    Med,
    High,
}

impl Strength {
    /// Fixed handcrafted parameters for each tier.
    pub fn params(self) -> CamouflageParams {
        let r = ParamRanges::default();
        match self {
            Strength::Low => CamouflageParams::manual(&r, 0.0, 0.002, 1, 0.1, 3, 0.5),
            Strength::Med => CamouflageParams::manual(&r, 0.0, 0.02, 3, 1.0, 3, 0.5),
            Strength::High => CamouflageParams::manual(&r, 0.0, 0.08, 7, 2.5, 5, 1.0),
        }
    }
}

/// A real face given deliberate blending inconsistency.
pub fn make_pseudo_fake(record: &FaceRecord, strength: Strength, seed: u64) -> Result<ImageF> {
    camouflage(record, &strength.params(), seed)
}

/// One V update batch. `fake` may hold pseudo-fakes.
pub struct VisualBatch<'a> {
    pub real: &'a [ImageF],
    pub fake: &'a [ImageF],
    pub camouflaged: &'a [ImageF],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualStepReport {
    /// V-side objective before the step: the sum over the three roles of the
    /// mean cross-entropy against the role's fixed label.
    pub loss: f64,
    pub grad_norm: f64,
}

/// The trainable visual critic.
#[derive(Clone, Debug)]
pub struct VisualDiscriminator {
    clf: Classifier,
    opt: AnyOptimizer,
}

impl VisualDiscriminator {
    pub fn new(arch: Architecture, seed: u64, lr: f64, optimizer: OptimizerKind) -> Result<Self> {
        let clf = Classifier::new(arch, seed)?;
        Self::from_classifier(clf, lr, optimizer)
    }

    pub fn from_classifier(clf: Classifier, lr: f64, optimizer: OptimizerKind) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(CamoError::Config(format!("learning rate {lr}")));
        }
        let n = clf.network().param_count();
        Ok(Self {
            clf,
            opt: AnyOptimizer::new(optimizer, lr, n),
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, lr: f64, optimizer: OptimizerKind) -> Result<Self> {
        ckpt.expect(ModelRole::Visual, None, None)?;
        Self::from_classifier(Classifier::from_network(ckpt.network()?)?, lr, optimizer)
    }

    pub fn to_checkpoint(&self, name: &str, provenance: &str) -> Checkpoint {
        let net = self.clf.network();
        Checkpoint::new(
            CheckpointHeader {
                role: ModelRole::Visual,
                name: name.into(),
                provenance: provenance.into(),
                architecture: net.architecture().clone(),
                ranges: None,
                gradient_access: true,
                param_count: net.param_count(),
            },
            net.params().to_vec(),
        )
        .expect("network parameters match their architecture")
    }

    pub fn classifier(&self) -> &Classifier {
        &self.clf
    }

    /// Probability that `img` looks visually real.
    pub fn predict(&self, img: &ImageF) -> Result<f64> {
        self.clf.predict(img)
    }

    /// The V-side objective for a batch without updating.
    pub fn objective(&self, batch: &VisualBatch<'_>) -> Result<f64> {
        let mut scratch = vec![0.0; self.clf.network().param_count()];
        Ok(self.objective_and_gradient(batch, &mut scratch)?)
    }

    fn objective_and_gradient(&self, batch: &VisualBatch<'_>, grads: &mut [f64]) -> Result<f64> {
        let roles: [(&[ImageF], f64, &'static str); 3] = [
            (batch.real, 1.0, "real"),
            (batch.fake, 0.0, "fake"),
            (batch.camouflaged, 0.0, "camouflaged"),
        ];
        if let Some((_, _, name)) = roles.iter().find(|(set, _, _)| set.is_empty()) {
            return Err(CamoError::EmptyBatch(name));
        }
        let mut loss = 0.0;
        for (set, target, _) in roles {
            let scale = 1.0 / set.len() as f64;
            for img in set {
                loss += scale * self.clf.accumulate_bce(img, target, scale, grads)?.0;
            }
        }
        Ok(loss)
    }

    /// One step pushing V(real) → 1, V(fake) → 0, V(camouflaged) → 0.
    pub fn train_step(&mut self, batch: &VisualBatch<'_>) -> Result<VisualStepReport> {
        let mut grads = vec![0.0; self.clf.network().param_count()];
        let loss = self.objective_and_gradient(batch, &mut grads)?;
        let grad_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(CamoError::ModelState(format!(
                "visual step produced loss {loss}, gradient norm {grad_norm}"
            )));
        }
        let VisualDiscriminator { clf, opt } = self;
        opt.step(clf.params_mut(), &grads);
        Ok(VisualStepReport { loss, grad_norm })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorTrainConfig {
    pub name: String,
    pub size: usize,
    pub lr: f64,
    /// Fraction of epochs after which the learning rate is multiplied by
    /// `lr_decay`.
    pub decay_after: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Required held-out balanced accuracy.
    pub gate: f64,
    pub min_train_reals: usize,
    /// Probability of applying a random post-process to a training sample.
    pub augment_prob: f64,
}

impl Default for DetectorTrainConfig {
    fn default() -> Self {
        Self {
            name: "desk-detector".into(),
            size: 128,
            lr: 1e-3,
            decay_after: 0.6,
            lr_decay: 0.1,
            batch_size: 16,
            epochs: 14,
            seed: 17,
            gate: 0.90,
            min_train_reals: 200,
            augment_prob: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_real_acc: f64,
    pub heldout_fake_acc: f64,
    pub balanced_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorTrainReport {
    pub epochs: Vec<EpochStats>,
    pub heldout_images: usize,
    pub balanced_accuracy: f64,
    pub fingerprint: String,
}

fn random_postprocess(rng: &mut ChaCha8Rng) -> PostProcess {
    match rng.random_range(0..3) {
        0 => PostProcess::Jpeg {
            quality: rng.random_range(60..=95),
        },
        1 => PostProcess::GaussianFilter {
            kernel: if rng.random_bool(0.5) { 3 } else { 5 },
            sigma: rng.random_range(0.3..0.8),
        },
        _ => PostProcess::GaussianNoise {
            mu: 0.0,
            sigma: rng.random_range(0.002..0.015),
        },
    }
}

fn tier_for(index: usize) -> Strength {
    if index % 2 == 0 {
        Strength::Med
    } else {
        Strength::High
    }
}

/// Held-out pseudo-fake for record `index`, identical across calls.
pub fn heldout_pseudo_fake(record: &FaceRecord, index: usize, seed: u64) -> Result<ImageF> {
    Ok(make_pseudo_fake(record, tier_for(index), seed ^ 0xF00D ^ index as u64)?.quantized())
}

/// Real and pseudo-fake accuracies of `det` on `heldout`.
pub fn heldout_accuracy(det: &Classifier, heldout: &[FaceRecord], seed: u64) -> Result<(f64, f64)> {
    let mut real_ok = 0usize;
    let mut fake_ok = 0usize;
    for (i, rec) in heldout.iter().enumerate() {
        if det.predict(&rec.image)? >= 0.5 {
            real_ok += 1;
        }
        if det.predict(&heldout_pseudo_fake(rec, i, seed)?)? < 0.5 {
            fake_ok += 1;
        }
    }
    let n = heldout.len() as f64;
    Ok((real_ok as f64 / n, fake_ok as f64 / n))
}

/// Trains a detector on reals versus med/high pseudo-fakes and checks the
/// held-out balanced accuracy against `cfg.gate`.
pub fn train_desk_detector(
    train: &[FaceRecord],
    heldout: &[FaceRecord],
    cfg: &DetectorTrainConfig,
) -> Result<(DetectorHandle, DetectorTrainReport)> {
    if train.len() < cfg.min_train_reals.max(1) {
        return Err(CamoError::Precondition(format!(
            "detector training needs at least {} train reals, manifest has {}",
            cfg.min_train_reals.max(1),
            train.len()
        )));
    }
    if heldout.is_empty() {
        return Err(CamoError::Precondition("no held-out reals for the detector gate".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(CamoError::Config("batch size and epochs must be positive".into()));
    }
    let arch = crate::backbone::detector_arch(cfg.size);
    let mut clf = Classifier::new(arch, cfg.seed)?;
    let mut opt = RmsProp::new(cfg.lr, clf.network().param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    let decay_epoch = (cfg.decay_after * cfg.epochs as f64).round() as usize;
    for epoch in 0..cfg.epochs {
        opt.lr = if epoch >= decay_epoch { cfg.lr * cfg.lr_decay } else { cfg.lr };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = vec![0.0; clf.network().param_count()];
            let scale = 1.0 / (2 * chunk.len()) as f64;
            for &i in chunk {
                let rec = &train[i];
                let tier = if rng.random_bool(0.5) { Strength::Med } else { Strength::High };
                let fake = make_pseudo_fake(rec, tier, rng.random())?.quantized();
                for (img, target) in [(rec.image.clone(), 1.0), (fake, 0.0)] {
                    let img = if rng.random::<f64>() < cfg.augment_prob {
                        random_postprocess(&mut rng).apply(&img, rng.random())?.quantized()
                    } else {
                        img
                    };
                    epoch_loss += clf.accumulate_bce(&img, target, scale, &mut grads)?.0;
                }
            }
            opt.step(clf.params_mut(), &grads);
        }
        let (real_acc, fake_acc) = heldout_accuracy(&clf, heldout, cfg.seed)?;
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / (2 * train.len()) as f64,
            heldout_real_acc: real_acc,
            heldout_fake_acc: fake_acc,
            balanced_accuracy: 0.5 * (real_acc + fake_acc),
        };
        log::info!(
            "detector epoch {epoch}: loss {:.4}, held-out real {:.3}, fake {:.3}",
            stats.train_loss,
            real_acc,
            fake_acc
        );
        epochs.push(stats);
    }

    let balanced = epochs.last().map(|e| e.balanced_accuracy).unwrap_or(0.0);
    let fingerprint = clf.network().fingerprint();
    let report = DetectorTrainReport {
        epochs,
        heldout_images: 2 * heldout.len(),
        balanced_accuracy: balanced,
        fingerprint,
    };
    if balanced < cfg.gate {
        return Err(CamoError::Gate(format!(
            "held-out balanced accuracy {balanced:.4} is below {:.2} after {} epochs (last epoch: {:?})",
            cfg.gate,
            cfg.epochs,
            report.epochs.last()
        )));
    }
    let provenance = format!(
        "desk pseudo-fake training: {} reals, {} epochs, lr {}, seed {}",
        train.len(),
        cfg.epochs,
        cfg.lr,
        cfg.seed
    );
    let handle = DetectorHandle::new(cfg.name.clone(), provenance, clf.network().clone(), true)?;
    Ok((handle, report))
}
