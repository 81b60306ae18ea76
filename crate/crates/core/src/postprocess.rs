//! Post-processing operations applied to images after camouflage: used by
//! the robustness suite and as detector-training augmentation.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::ImageFormat;
use serde::{Deserialize, Serialize};

use crate::camouflage::{add_gaussian_noise, gaussian_filter};
use crate::error::{CamoError, Result};
use crate::image::ImageF;

/// Identity string of the JPEG encoder, recorded in reports.
pub const JPEG_ENCODER: &str = "image-rs jpeg encoder (baseline, 4:2:0)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PostProcess {
    None,
    Jpeg { quality: u8 },
    GaussianFilter { kernel: usize, sigma: f64 },
    GaussianNoise { mu: f64, sigma: f64 },
}

impl PostProcess {
    /// `none`, JPEG q75, Gaussian filter (σ 0.5, 5×5), Gaussian noise (σ 0.01).
    pub fn standard_suite() -> Vec<Self> {
        vec![
            Self::None,
            Self::Jpeg { quality: 75 },
            Self::GaussianFilter { kernel: 5, sigma: 0.5 },
            Self::GaussianNoise { mu: 0.0, sigma: 0.01 },
        ]
    }

    pub fn tag(&self) -> String {
        match self {
            Self::None => "none".into(),
            Self::Jpeg { quality } => format!("jpeg{quality}"),
            Self::GaussianFilter { kernel, sigma } => format!("gf_k{kernel}_s{sigma}"),
            Self::GaussianNoise { mu, sigma } => format!("gn_m{mu}_s{sigma}"),
        }
    }

    /// `seed` only matters for the noise variant.
    pub fn apply(&self, img: &ImageF, seed: u64) -> Result<ImageF> {
        match *self {
            Self::None => Ok(img.clone()),
            Self::Jpeg { quality } => jpeg_round_trip(img, quality),
            Self::GaussianFilter { kernel, sigma } => gaussian_filter(img, kernel, sigma),
            Self::GaussianNoise { mu, sigma } => add_gaussian_noise(img, mu, sigma, seed),
        }
    }
}

/// Encodes to JPEG at `quality` and decodes back.
pub fn jpeg_round_trip(img: &ImageF, quality: u8) -> Result<ImageF> {
    if !(1..=100).contains(&quality) {
        return Err(CamoError::ParamDomain(format!("JPEG quality {quality}")));
    }
    let rgb = img.to_rgb8();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&rgb)
        .map_err(|e| CamoError::Decode {
            path: "<jpeg>".into(),
            message: e.to_string(),
        })?;
    let decoded = image::load(Cursor::new(buf), ImageFormat::Jpeg).map_err(|e| CamoError::Decode {
        path: "<jpeg>".into(),
        message: e.to_string(),
    })?;
    Ok(ImageF::from_rgb8(&decoded.to_rgb8()))
}
