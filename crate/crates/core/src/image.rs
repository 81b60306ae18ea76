//! Float RGB images in `[0, 1]` and single-channel planes.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{CamoError, Result};

/// An `H×W×3` image with channel values in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CamoError::ParamDomain("image dimensions must be positive".into()));
        }
        if data.len() != height * width * 3 {
            return Err(CamoError::shape(height * width * 3, data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CamoError::ParamDomain(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image from arbitrary values, clamping each into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = clamp01(*v);
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![clamp01(value); height * width * 3],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &ImageF) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(CamoError::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        Self {
            height: h as usize,
            width: w as usize,
            data,
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        ImageBuffer::<Rgb<u8>, _>::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| to_u8(v) as f64 / 255.0).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CamoError::io(path, e))?;
        let decoded = image::load_from_memory(&bytes).map_err(|e| CamoError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self::from_rgb8(&decoded.to_rgb8()))
    }

    /// Writes a lossless PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.to_rgb8()
            .write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png)
            .map_err(|e| CamoError::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        std::fs::write(path, buf).map_err(|e| CamoError::io(path, e))
    }

    /// Channel-major copy (`3×H×W`) for the networks.
    pub fn to_chw(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * 3];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            out[i] = px[0];
            out[plane + i] = px[1];
            out[2 * plane + i] = px[2];
        }
        out
    }

    pub fn from_chw(height: usize, width: usize, chw: &[f64]) -> Result<Self> {
        let plane = height * width;
        if chw.len() != plane * 3 {
            return Err(CamoError::shape(plane * 3, chw.len()));
        }
        let mut data = vec![0.0; plane * 3];
        for i in 0..plane {
            for c in 0..3 {
                data[i * 3 + c] = clamp01(chw[c * plane + i]);
            }
        }
        Ok(Self { height, width, data })
    }

    /// BT.601 luma on the 8-bit scale (`0..=255`).
    pub fn luma8(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 255.0 * (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]))
            .collect()
    }

    /// Extracts channel `c` as a plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.chunks_exact(3).map(|p| p[c]).collect()
    }

    /// Rebuilds an image from three planes, clamping into `[0, 1]`.
    pub fn from_planes(height: usize, width: usize, planes: [&[f64]; 3]) -> Result<Self> {
        let n = height * width;
        for p in planes {
            if p.len() != n {
                return Err(CamoError::shape(n, p.len()));
            }
        }
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            for p in planes {
                data.push(clamp01(p[i]));
            }
        }
        Ok(Self { height, width, data })
    }

    /// Bilinear resampling with half-pixel centres.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        if (height, width) == self.dims() {
            return self.clone();
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut data = vec![0.0; height * width * 3];
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                for c in 0..3 {
                    let a = self.get(y0, x0, c) * (1.0 - tx) + self.get(y0, x1, c) * tx;
                    let b = self.get(y1, x0, c) * (1.0 - tx) + self.get(y1, x1, c) * tx;
                    data[(y * width + x) * 3 + c] = clamp01(a * (1.0 - ty) + b * ty);
                }
            }
        }
        Self { height, width, data }
    }
}

pub(crate) fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn to_u8(v: f64) -> u8 {
    (clamp01(v) * 255.0).round() as u8
}
