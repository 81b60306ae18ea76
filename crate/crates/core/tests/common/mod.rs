//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use camo_core::backbone::detector_arch;
use camo_core::corpus::{synth_records, CorpusConfig};
use camo_core::discriminators::{sigmoid, DetectorHandle};
use camo_core::generator::{loss_vc_from_heads, GeneratorModel, ParamGenerator, LOSS_VC_SIGNS};
use camo_core::landmarks::FaceRecord;
use camo_core::params::{Head, Heads, ParamRanges, NUM_HEADS};
use camo_core::{ImageF, Result};
use camo_nn::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` synthetic faces at `size`×`size`, in corpus order.
pub fn records(count: usize, size: usize) -> Vec<FaceRecord> {
    synth_records(&CorpusConfig {
        count,
        size,
        ..Default::default()
    })
    .expect("corpus renders")
    .into_iter()
    .map(|(r, _)| r)
    .collect()
}

/// A network of the detector family whose logit is `logit` for every input.
pub fn constant_network(size: usize, logit: f64) -> Network {
    let mut net = Network::new(detector_arch(size), 0).expect("valid architecture");
    net.params_mut().iter_mut().for_each(|p| *p = 0.0);
    net.set_output_bias(&[logit]).expect("one output");
    net
}

pub fn constant_detector(size: usize, logit: f64) -> DetectorHandle {
    DetectorHandle::new("constant", "test fixture", constant_network(size, logit), true).expect("valid detector")
}

pub fn random_detector(size: usize, seed: u64) -> DetectorHandle {
    let net = Network::new(detector_arch(size), seed).expect("valid architecture");
    DetectorHandle::new("random", "test fixture", net, true).expect("valid detector")
}

/// Two-parameter generator: head `j` is `σ(a·C[j] + b·m(x)·D[j])` where
/// `m(x)` is the mean pixel value.
#[derive(Clone, Debug)]
pub struct ToyGenerator {
    pub theta: Vec<f64>,
    pub ranges: ParamRanges,
}

pub const TOY_C: [f64; NUM_HEADS] = [0.3, -0.2, 0.5, 0.1, -0.4, 0.25];
pub const TOY_D: [f64; NUM_HEADS] = [0.2, 0.1, -0.3, 0.4, 0.15, -0.1];

pub fn mean_pixel(img: &ImageF) -> f64 {
    img.data().iter().sum::<f64>() / img.data().len() as f64
}

impl ToyGenerator {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            theta: vec![a, b],
            ranges: ParamRanges::default(),
        }
    }

    fn logits(&self, img: &ImageF) -> [f64; NUM_HEADS] {
        let m = mean_pixel(img);
        let mut z = [0.0; NUM_HEADS];
        for j in 0..NUM_HEADS {
            z[j] = self.theta[0] * TOY_C[j] + self.theta[1] * m * TOY_D[j];
        }
        z
    }
}

impl ParamGenerator for ToyGenerator {
    fn ranges(&self) -> &ParamRanges {
        &self.ranges
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn heads(&self, img: &ImageF) -> Result<Heads> {
        Ok(self.logits(img).map(sigmoid))
    }

    fn accumulate_loss_vc_grad(&self, img: &ImageF, eps: f64, scale: f64, grads: &mut [f64]) -> Result<f64> {
        let heads = self.heads(img)?;
        let m = mean_pixel(img);
        for j in 0..NUM_HEADS {
            if heads[j] >= eps {
                let dz = scale * LOSS_VC_SIGNS[j] * (1.0 - heads[j]);
                grads[0] += dz * TOY_C[j];
                grads[1] += dz * m * TOY_D[j];
            }
        }
        Ok(loss_vc_from_heads(&heads, eps))
    }

    fn accumulate_mu_pull_grad(&self, img: &ImageF, weight: f64, scale: f64, grads: &mut [f64]) -> Result<()> {
        let heads = self.heads(img)?;
        let (lo, hi) = self.ranges.mu_gn;
        let j = Head::MuGn as usize;
        let mu = lo + heads[j] * (hi - lo);
        let dz = scale * weight * 2.0 * mu * (hi - lo) * heads[j] * (1.0 - heads[j]);
        grads[0] += dz * TOY_C[j];
        grads[1] += dz * mean_pixel(img) * TOY_D[j];
        Ok(())
    }
}

/// Uniform image with every channel at `level / 255`.
pub fn uniform_image(size: usize, level: f64) -> ImageF {
    ImageF::filled(size, size, level / 255.0)
}

/// Share of sampled coordinates whose analytic gradient agrees with central
/// differences to relative error below `tol`.
pub fn gradient_agreement(g: &GeneratorModel, rec: &FaceRecord, samples: usize, tol: f64, seed: u64) -> f64 {
    let eps = 1e-6;
    let mut grads = vec![0.0; g.theta().len()];
    g.accumulate_loss_vc_grad(&rec.image, eps, 1.0, &mut grads).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    for _ in 0..samples {
        let i = rng.random_range(0..grads.len());
        let mut probe = g.clone();
        let h = 1e-5 * probe.theta()[i].abs().max(1.0);
        probe.theta_mut()[i] += h;
        let up = loss_vc_from_heads(&probe.heads(&rec.image).unwrap(), eps);
        probe.theta_mut()[i] -= 2.0 * h;
        let down = loss_vc_from_heads(&probe.heads(&rec.image).unwrap(), eps);
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(grads[i].abs());
        if scale < 1e-8 || (numeric - grads[i]).abs() / scale < tol {
            ok += 1;
        }
    }
    ok as f64 / samples as f64
}
