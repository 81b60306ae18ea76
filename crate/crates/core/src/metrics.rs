//! Image-quality and detector metrics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camouflage::gaussian_kernel_1d;
use crate::discriminators::DetectorHandle;
use crate::error::{CamoError, Result};
use crate::image::ImageF;
use crate::landmarks::BinaryMask;
use crate::manifest::Label;
use crate::params::{CamouflageParams, ParamRanges};
use crate::postprocess::{PostProcess, JPEG_ENCODER};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const PIXEL_MAX: f64 = 255.0;

/// Valid-region Gaussian filtering of a plane with separable taps.
fn valid_filter(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(t, c)| c * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(t, c)| c * rows[(y + t) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Per-window SSIM map on 8-bit luma (11×11 Gaussian window, σ = 1.5,
/// K1 = 0.01, K2 = 0.03, L = 255), over windows fully inside the image.
pub fn ssim_map(a: &ImageF, b: &ImageF) -> Result<(Vec<f64>, usize, usize)> {
    a.same_shape(b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(CamoError::ParamDomain(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA)?;
    let x = a.luma8();
    let y = b.luma8();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, oh, ow) = valid_filter(&x, h, w, &taps);
    let (my, ..) = valid_filter(&y, h, w, &taps);
    let (sxx, ..) = valid_filter(&xx, h, w, &taps);
    let (syy, ..) = valid_filter(&yy, h, w, &taps);
    let (sxy, ..) = valid_filter(&xy, h, w, &taps);
    let c1 = (SSIM_K1 * PIXEL_MAX).powi(2);
    let c2 = (SSIM_K2 * PIXEL_MAX).powi(2);
    let map = (0..oh * ow)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .collect();
    Ok((map, oh, ow))
}

/// Mean SSIM. Identical inputs return exactly 1.
pub fn ssim(a: &ImageF, b: &ImageF) -> Result<f64> {
    if a == b {
        a.same_shape(b)?;
        return Ok(1.0);
    }
    let (map, ..) = ssim_map(a, b)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// PSNR in dB, or infinite for identical images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn as_f64(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Psnr::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(Psnr::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value {t}"))),
        }
    }
}

/// `10·log10(255² / MSE)` over all channels on the 8-bit scale.
pub fn psnr(a: &ImageF, b: &ImageF) -> Result<Psnr> {
    a.same_shape(b)?;
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| ((p - q) * PIXEL_MAX).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        Ok(Psnr::Infinite)
    } else {
        Ok(Psnr::Finite(10.0 * (PIXEL_MAX * PIXEL_MAX / mse).log10()))
    }
}

/// Fraction of `images` whose decision (threshold 0.5, ties real) equals
/// `label`.
pub fn accuracy(d: &DetectorHandle, images: &[ImageF], label: Label) -> Result<f64> {
    if images.is_empty() {
        return Err(CamoError::ParamDomain("accuracy over an empty set".into()));
    }
    let mut hits = 0usize;
    for img in images {
        if Label::from_probability(d.predict(img)?) == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / images.len() as f64)
}

/// Covariance jitter added when a feature covariance is singular.
pub const FID_JITTER: f64 = 1e-6;

fn mean_and_cov(features: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    if n < 2 {
        return Err(CamoError::ParamDomain(format!("FID needs at least 2 samples per set, got {n}")));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(CamoError::shape(format!("{dim}-dim features"), "ragged feature vectors"));
    }
    let x = DMatrix::from_fn(n, dim, |i, j| features[i][j]);
    let mean = DVector::from_fn(dim, |j, _| x.column(j).sum() / n as f64);
    let centred = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    Ok((mean, cov))
}

fn is_singular(cov: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    eig.iter().any(|&v| v <= 1e-12 * max.max(1.0))
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two feature sets:
/// `‖μA − μB‖² + Tr(ΣA + ΣB − 2(ΣA ΣB)^½)`.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (mu_a, mut cov_a) = mean_and_cov(a)?;
    let (mu_b, mut cov_b) = mean_and_cov(b)?;
    if mu_a.len() != mu_b.len() {
        return Err(CamoError::shape(format!("{}-dim features", mu_a.len()), format!("{}-dim", mu_b.len())));
    }
    let dim = mu_a.len();
    for (name, n) in [("A", a.len()), ("B", b.len())] {
        if n < 2 * dim {
            log::warn!("FID set {name} has {n} samples for {dim}-dim features; estimate is noisy");
        }
    }
    if is_singular(&cov_a) || is_singular(&cov_b) {
        log::warn!("singular feature covariance; adding {FID_JITTER}·I");
        let jitter = DMatrix::identity(dim, dim) * FID_JITTER;
        cov_a += &jitter;
        cov_b += &jitter;
    }
    let root_a = sym_sqrt(&cov_a);
    let inner = &root_a * &cov_b * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>();
    let diff = (&mu_a - &mu_b).norm_squared();
    Ok((diff + cov_a.trace() + cov_b.trace() - 2.0 * cross).max(0.0))
}

/// FID value together with the tag of the feature extractor it used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fid {
    pub value: f64,
    pub extractor: String,
}

/// Tag identifying the penultimate features of `d` as a surrogate for the
/// Inception features of standard FID.
pub fn fid_extractor_tag(d: &DetectorHandle) -> String {
    format!("FID-surrogate: {} penultimate features", d.name())
}

/// FID over the penultimate features of `d`.
pub fn fid(a: &[ImageF], b: &[ImageF], d: &DetectorHandle) -> Result<Fid> {
    let fa = a.iter().map(|x| d.features(x)).collect::<Result<Vec<_>>>()?;
    let fb = b.iter().map(|x| d.features(x)).collect::<Result<Vec<_>>>()?;
    Ok(Fid {
        value: frechet_distance(&fa, &fb)?,
        extractor: fid_extractor_tag(d),
    })
}

/// Accuracy of one detector on one image set under one post-process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccRow {
    pub detector: String,
    pub attack: String,
    pub postprocess: String,
    pub acc_real_as_real: f64,
    pub n: usize,
}

/// One detector decision, as written to the per-image verdict log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub image_id: String,
    pub detector: String,
    pub attack: String,
    pub postprocess: String,
    pub p_real: f64,
    pub predicted: Label,
}

/// Seed for post-processing image `index` of a set.
fn postprocess_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Applies each post-process in `postprocs` to `images` (then quantizes to
/// 8 bits) and measures how many are still classified real.
pub fn robustness_suite(
    images: &[ImageF],
    ids: &[String],
    d: &DetectorHandle,
    attack: &str,
    postprocs: &[PostProcess],
    seed: u64,
) -> Result<(Vec<AccRow>, Vec<Verdict>)> {
    if images.is_empty() {
        return Err(CamoError::ParamDomain("robustness suite over an empty set".into()));
    }
    if ids.len() != images.len() {
        return Err(CamoError::shape(format!("{} ids", images.len()), format!("{}", ids.len())));
    }
    let mut rows = Vec::with_capacity(postprocs.len());
    let mut verdicts = Vec::with_capacity(postprocs.len() * images.len());
    for post in postprocs {
        let tag = post.tag();
        let mut real = 0usize;
        for (i, (img, id)) in images.iter().zip(ids).enumerate() {
            let x = post.apply(img, postprocess_seed(seed, i))?.quantized();
            let p = d.predict(&x)?;
            let predicted = Label::from_probability(p);
            if predicted == Label::Real {
                real += 1;
            }
            verdicts.push(Verdict {
                image_id: id.clone(),
                detector: d.name().to_string(),
                attack: attack.to_string(),
                postprocess: tag.clone(),
                p_real: p,
                predicted,
            });
        }
        rows.push(AccRow {
            detector: d.name().to_string(),
            attack: attack.to_string(),
            postprocess: tag,
            acc_real_as_real: real as f64 / images.len() as f64,
            n: images.len(),
        });
    }
    Ok((rows, verdicts))
}

/// Recomputes an accuracy cell from verdict records.
pub fn recount(verdicts: &[Verdict], detector: &str, attack: &str, postprocess: &str) -> Option<f64> {
    let cell: Vec<&Verdict> = verdicts
        .iter()
        .filter(|v| v.detector == detector && v.attack == attack && v.postprocess == postprocess)
        .collect();
    if cell.is_empty() {
        return None;
    }
    Some(cell.iter().filter(|v| v.predicted == Label::Real).count() as f64 / cell.len() as f64)
}

/// Image-quality block for one attack, measured against the clean images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub attack: String,
    pub mean_ssim: f64,
    /// Mean over images with finite PSNR; `inf` when every image is
    /// unchanged.
    pub mean_psnr: Psnr,
    pub fid: Fid,
    pub n: usize,
}

pub fn quality_row(attack: &str, clean: &[ImageF], attacked: &[ImageF], d: &DetectorHandle) -> Result<QualityRow> {
    if clean.is_empty() || clean.len() != attacked.len() {
        return Err(CamoError::shape(
            format!("{} attacked images", clean.len()),
            format!("{}", attacked.len()),
        ));
    }
    let mut ssim_sum = 0.0;
    let mut finite = Vec::new();
    for (c, a) in clean.iter().zip(attacked) {
        ssim_sum += ssim(a, c)?;
        if let Psnr::Finite(v) = psnr(a, c)? {
            finite.push(v);
        }
    }
    let mean_psnr = if finite.is_empty() {
        Psnr::Infinite
    } else {
        Psnr::Finite(finite.iter().sum::<f64>() / finite.len() as f64)
    };
    Ok(QualityRow {
        attack: attack.to_string(),
        mean_ssim: ssim_sum / clean.len() as f64,
        mean_psnr,
        fid: fid(clean, attacked, d)?,
        n: clean.len(),
    })
}

/// ACC table plus image-quality blocks and an echo of the run
/// configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<AccRow>,
    pub quality: Vec<QualityRow>,
    pub jpeg_encoder: String,
    pub config: serde_json::Value,
}

/// A named set of attacked images aligned with the clean set.
pub struct AttackSet<'a> {
    pub name: &'a str,
    pub images: &'a [ImageF],
}

/// Evaluates every detector on every attack set under every post-process.
/// Quality blocks use the first detector as FID feature extractor.
pub fn evaluate(
    detectors: &[&DetectorHandle],
    clean: &[ImageF],
    ids: &[String],
    attacks: &[AttackSet<'_>],
    postprocs: &[PostProcess],
    seed: u64,
    config: serde_json::Value,
) -> Result<(MetricsReport, Vec<Verdict>)> {
    let first = detectors
        .first()
        .ok_or_else(|| CamoError::Config("evaluation needs at least one detector".into()))?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for d in detectors {
        for a in attacks {
            let (r, v) = robustness_suite(a.images, ids, d, a.name, postprocs, seed)?;
            rows.extend(r);
            verdicts.extend(v);
        }
    }
    let quality = attacks
        .iter()
        .map(|a| quality_row(a.name, clean, a.images, first))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        MetricsReport {
            rows,
            quality,
            jpeg_encoder: JPEG_ENCODER.to_string(),
            config,
        },
        verdicts,
    ))
}

/// A heatmap with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    /// Share of the total heat that falls inside `mask`.
    pub fn mass_inside(&self, mask: &BinaryMask) -> Result<f64> {
        if mask.dims() != (self.height, self.width) {
            return Err(CamoError::shape(
                format!("{}x{}", self.height, self.width),
                format!("{:?}", mask.dims()),
            ));
        }
        let total: f64 = self.values.iter().sum();
        if total == 0.0 {
            return Ok(0.0);
        }
        let inside: f64 = self
            .values
            .iter()
            .zip(mask.values())
            .filter(|(_, &m)| m != 0)
            .map(|(v, _)| v)
            .sum();
        Ok(inside / total)
    }

    /// Red overlay of the heatmap on `img`, for saving as PNG.
    pub fn overlay(&self, img: &ImageF, alpha: f64) -> Result<ImageF> {
        if img.dims() != (self.height, self.width) {
            return Err(CamoError::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        let heat = [1.0, 0.0, 0.0];
        let data = img
            .data()
            .chunks(3)
            .zip(&self.values)
            .flat_map(|(px, &v)| {
                let a = alpha * v;
                (0..3).map(move |c| (1.0 - a) * px[c] + a * heat[c])
            })
            .collect();
        ImageF::from_clamped(self.height, self.width, data)
    }
}

/// Bilinear resampling of a plane with pixel-centre alignment.
fn upsample_bilinear(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let coord = |o: usize, n_in: usize, n_out: usize| {
        let c = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = c.floor() as usize;
        (i0, (i0 + 1).min(n_in - 1), c - i0 as f64)
    };
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        let (y0, y1, fy) = coord(y, h, oh);
        for x in 0..ow {
            let (x0, x1, fx) = coord(x, w, ow);
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out[y * ow + x] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

/// Grad-CAM on the detector's last convolutional block for `target`
/// (the real class scores the logit, the fake class its negation).
/// A map with no positive evidence is returned as all zeros.
pub fn grad_cam(d: &DetectorHandle, img: &ImageF, target: Label) -> Result<Heatmap> {
    let clf = d.gradients()?;
    let ag = clf.activation_gradient(img)?;
    let sign = match target {
        Label::Real => 1.0,
        Label::Fake => -1.0,
    };
    let hw = ag.height * ag.width;
    let mut cam = vec![0.0; hw];
    for c in 0..ag.channels {
        let grad = &ag.gradient[c * hw..(c + 1) * hw];
        let alpha = sign * grad.iter().sum::<f64>() / hw as f64;
        for (v, a) in cam.iter_mut().zip(&ag.activation[c * hw..(c + 1) * hw]) {
            *v += alpha * a;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let (h, w) = img.dims();
    let mut values = upsample_bilinear(&cam, ag.height, ag.width, h, w);
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(Heatmap {
        height: h,
        width: w,
        values,
    })
}

/// PGD settings; defaults are ε = 8/255, 10 steps of 2/255.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            epsilon: 8.0 / 255.0,
            steps: 10,
            step_size: 2.0 / 255.0,
        }
    }
}

/// L∞ projected gradient descent on the detector logit, pushing the
/// probability of real down. Starts from `img` itself.
pub fn pgd_attack(d: &DetectorHandle, img: &ImageF, cfg: &PgdConfig) -> Result<ImageF> {
    if !(cfg.epsilon >= 0.0 && cfg.step_size >= 0.0) {
        return Err(CamoError::ParamDomain(format!(
            "PGD epsilon {} and step size {} must be non-negative",
            cfg.epsilon, cfg.step_size
        )));
    }
    let clf = d.gradients()?;
    let (h, w) = img.dims();
    let orig = img.data();
    let mut x = orig.to_vec();
    for _ in 0..cfg.steps {
        let cur = ImageF::new(h, w, x.clone())?;
        let (_, grad) = clf.logit_input_gradient(&cur)?;
        for ((v, g), o) in x.iter_mut().zip(&grad).zip(orig) {
            let sign = if *g > 0.0 {
                1.0
            } else if *g < 0.0 {
                -1.0
            } else {
                0.0
            };
            *v = (*v - cfg.step_size * sign).clamp(o - cfg.epsilon, o + cfg.epsilon).clamp(0.0, 1.0);
        }
    }
    ImageF::new(h, w, x)
}

/// Parameters drawn uniformly over `ranges`, kernels uniformly over the
/// allowed sets.
pub fn handcrafted_params<R: Rng>(rng: &mut R, ranges: &ParamRanges) -> CamouflageParams {
    let uniform = |rng: &mut R, (lo, hi): (f64, f64)| rng.random_range(lo..hi);
    let mu_gn = uniform(rng, ranges.mu_gn);
    let sigma_gn = uniform(rng, ranges.sigma_gn);
    let k_gf = ranges.k_gf[rng.random_range(0..ranges.k_gf.len())];
    let sigma_gf = uniform(rng, ranges.sigma_gf);
    let k_bl = ranges.k_bl[rng.random_range(0..ranges.k_bl.len())];
    let sigma_bl = uniform(rng, ranges.sigma_bl);
    CamouflageParams::manual(ranges, mu_gn, sigma_gn, k_gf, sigma_gf, k_bl, sigma_bl)
}
