//! The camouflage module: Gaussian noising, Gaussian filtering, soft-mask
//! construction and blending.
//!
//! Every operation is a pure function. Filtering uses reflect-101 borders
//! (`dcb|abcd|cba`) and is implemented separably; outputs are clamped to
//! `[0, 1]` after each step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CamoError, Result};
use crate::image::{clamp01, ImageF};
use crate::landmarks::{BinaryMask, FaceRecord};
use crate::params::CamouflageParams;

/// Per-pixel blending weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != height * width {
            return Err(CamoError::shape(height * width, weights.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(CamoError::ParamDomain(format!("mask weight {w} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            weights,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            weights: vec![clamp01(value); height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of pixels with `lo < m < hi`.
    pub fn transition_count(&self, lo: f64, hi: f64) -> usize {
        self.weights.iter().filter(|&&m| m > lo && m < hi).count()
    }
}

/// Odd size ≥ 1 check shared by the kernel builders.
fn check_kernel(k: usize, sigma: f64) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(CamoError::ParamDomain(format!("kernel size {k} must be odd and positive")));
    }
    if k > 1 && !(sigma > 0.0 && sigma.is_finite()) {
        return Err(CamoError::ParamDomain(format!("kernel sigma {sigma} must be positive")));
    }
    Ok(())
}

/// Normalized 1-D Gaussian taps on `-(k/2)..=k/2`.
pub fn gaussian_kernel_1d(k: usize, sigma: f64) -> Result<Vec<f64>> {
    check_kernel(k, sigma)?;
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let r = (k / 2) as f64;
    let taps: Vec<f64> = (0..k)
        .map(|i| {
            let x = i as f64 - r;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

/// `k×k` Gaussian kernel, row-major, summing to one.
///
/// Built as the outer product of the normalized 1-D taps, which equals the
/// normalized `exp(-(x²+y²)/2σ²)` grid since the Gaussian factorizes.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Result<Vec<f64>> {
    let taps = gaussian_kernel_1d(k, sigma)?;
    Ok(taps
        .iter()
        .flat_map(|a| taps.iter().map(move |b| a * b))
        .collect())
}

/// Reflect-101 index into `0..n`.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Separable convolution of one plane with symmetric taps.
pub(crate) fn filter_plane(plane: &[f64], height: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    if taps.len() == 1 {
        return plane.iter().map(|v| v * taps[0]).collect();
    }
    let r = (taps.len() / 2) as isize;
    let mut rows = vec![0.0; plane.len()];
    for y in 0..height {
        let src = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                acc += w * src[reflect(x as isize + t as isize - r, width)];
            }
            rows[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for (t, w) in taps.iter().enumerate() {
            let sy = reflect(y as isize + t as isize - r, height);
            let src = &rows[sy * width..(sy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

/// Adds `N(mu, sigma²)` noise to every channel value and clamps.
///
/// The noise stream comes from a ChaCha8 generator keyed by `seed`, so the
/// output depends only on the arguments.
pub fn add_gaussian_noise(img: &ImageF, mu: f64, sigma: f64, seed: u64) -> Result<ImageF> {
    let noise = gaussian_noise_field(img.data().len(), mu, sigma, seed)?;
    let (h, w) = img.dims();
    ImageF::from_clamped(
        h,
        w,
        img.data().iter().zip(&noise).map(|(x, n)| x + n).collect(),
    )
}

/// The raw (unclamped) noise that [`add_gaussian_noise`] would add.
pub fn gaussian_noise_field(len: usize, mu: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return Err(CamoError::ParamDomain(format!(
            "noise needs finite mu and sigma >= 0, got ({mu}, {sigma})"
        )));
    }
    if sigma == 0.0 {
        return Ok(vec![mu; len]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mu + sigma * z
        })
        .collect())
}

/// Per-channel Gaussian blur with reflect borders; `k = 1` is the identity.
pub fn gaussian_filter(img: &ImageF, k: usize, sigma: f64) -> Result<ImageF> {
    let taps = gaussian_kernel_1d(k, sigma)?;
    if k == 1 {
        return Ok(img.clone());
    }
    let (h, w) = img.dims();
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| filter_plane(&img.channel(c), h, w, &taps))
        .collect();
    ImageF::from_planes(h, w, [&planes[0], &planes[1], &planes[2]])
}

/// Blurs a binary mask into a soft mask with the same filter as images.
pub fn make_soft_mask(mask: &BinaryMask, k: usize, sigma: f64) -> Result<SoftMask> {
    let taps = gaussian_kernel_1d(k, sigma)?;
    let (h, w) = mask.dims();
    let plane: Vec<f64> = mask.values().iter().map(|&v| v as f64).collect();
    let weights = if k == 1 {
        plane
    } else {
        filter_plane(&plane, h, w, &taps)
            .into_iter()
            .map(clamp01)
            .collect()
    };
    SoftMask::new(h, w, weights)
}

/// `processed·M + original·(1−M)` per pixel and channel.
///
/// The endpoints are exact: `M = 0` yields `original`, `M = 1` yields
/// `processed`, and equal inputs yield that value for any `M`.
pub fn blend(processed: &ImageF, original: &ImageF, mask: &SoftMask) -> Result<ImageF> {
    processed.same_shape(original)?;
    if mask.dims() != original.dims() {
        return Err(CamoError::shape(
            format!("{:?}", original.dims()),
            format!("{:?}", mask.dims()),
        ));
    }
    let (h, w) = original.dims();
    let data = processed
        .data()
        .chunks_exact(3)
        .zip(original.data().chunks_exact(3))
        .zip(mask.weights())
        .flat_map(|((p, o), &m)| (0..3).map(move |c| mix(p[c], o[c], m)))
        .collect();
    ImageF::new(h, w, data)
}

fn mix(p: f64, o: f64, m: f64) -> f64 {
    if m == 0.0 || p == o {
        o
    } else if m == 1.0 {
        p
    } else {
        clamp01(p * m + o * (1.0 - m))
    }
}

/// The full pipeline: noise, filter, then blend back through the soft hull
/// mask. Pixels where the soft mask is zero are returned untouched.
pub fn camouflage(record: &FaceRecord, params: &CamouflageParams, seed: u64) -> Result<ImageF> {
    params.validate()?;
    let noisy = add_gaussian_noise(&record.image, params.mu_gn, params.sigma_gn, seed)?;
    let filtered = gaussian_filter(&noisy, params.k_gf, params.sigma_gf)?;
    let mask = make_soft_mask(&record.hull_mask, params.k_bl, params.sigma_bl)?;
    blend(&filtered, &record.image, &mask)
}
