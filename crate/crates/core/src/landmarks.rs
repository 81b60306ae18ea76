//! Face records, facial-contour landmarks, and the convex-hull mask.
//!
//! Coordinates are pixel units with the origin at the top-left pixel centre:
//! pixel `(row, col)` has its centre at `(x = col, y = row)`. Landmark files
//! are JSON arrays of `[x, y]` pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CamoError, Result};
use crate::image::ImageF;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// `(b − a) × (c − a)`; positive when `a → b → c` turns counter-clockwise in
/// the `(x, y)` frame.
fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// An `H×W` mask with values in `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != height * width {
            return Err(CamoError::shape(height * width, values.len()));
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(CamoError::ParamDomain(format!("mask value {v} is not binary")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    pub fn area(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn coverage(&self) -> f64 {
        self.area() as f64 / self.values.len() as f64
    }

    /// Grayscale PNG, 0 or 255.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw = self.values.iter().map(|&v| v * 255).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|e| CamoError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| CamoError::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        let values = img.as_raw().iter().map(|&v| u8::from(v >= 128)).collect();
        Self::new(h as usize, w as usize, values)
    }
}

/// Convex hull by Andrew's monotone chain. Returns the vertices in
/// counter-clockwise order (positive signed area), without collinear points.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    if points.len() < 3 {
        return Err(CamoError::Geometry(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(CamoError::Geometry("non-finite coordinate".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();

    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(CamoError::Geometry("all points are collinear".into()));
    }
    Ok(lower)
}

/// Whether `p` lies inside or on a counter-clockwise convex polygon.
pub fn polygon_contains(polygon: &[Point], p: Point) -> bool {
    const TOL: f64 = 1e-9;
    (0..polygon.len()).all(|i| {
        let a = polygon[i];
        let b = polygon[(i + 1) % polygon.len()];
        cross(a, b, p) >= -TOL
    })
}

/// Marks every pixel whose centre is inside or on the polygon.
pub fn rasterize_hull(polygon: &[Point], height: usize, width: usize) -> BinaryMask {
    let mut values = vec![0u8; height * width];
    if polygon.len() >= 3 {
        let min_y = polygon.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = polygon.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let min_x = polygon.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = polygon.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let y0 = min_y.floor().max(0.0) as usize;
        let y1 = (max_y.ceil().max(0.0) as usize).min(height.saturating_sub(1));
        let x0 = min_x.floor().max(0.0) as usize;
        let x1 = (max_x.ceil().max(0.0) as usize).min(width.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if polygon_contains(polygon, Point::new(x as f64, y as f64)) {
                    values[y * width + x] = 1;
                }
            }
        }
    }
    BinaryMask {
        height,
        width,
        values,
    }
}

/// Centred axis-aligned ellipse with semi-axes `0.30·W` and `0.40·H`, used
/// when a record has no usable landmarks.
pub fn fallback_ellipse_mask(height: usize, width: usize) -> Result<BinaryMask> {
    if height < 16 || width < 16 {
        return Err(CamoError::Precondition(format!(
            "fallback mask needs at least 16x16, got {height}x{width}"
        )));
    }
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let (a, b) = (0.30 * width as f64, 0.40 * height as f64);
    let values = (0..height)
        .flat_map(|y| {
            (0..width).map(move |x| {
                let dx = (x as f64 - cx) / a;
                let dy = (y as f64 - cy) / b;
                u8::from(dx * dx + dy * dy <= 1.0)
            })
        })
        .collect();
    Ok(BinaryMask {
        height,
        width,
        values,
    })
}

/// One face image with its contour landmarks and hull mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceRecord {
    pub image: ImageF,
    pub landmarks: Vec<Point>,
    pub hull_mask: BinaryMask,
    pub source_id: String,
}

impl FaceRecord {
    /// Validates landmark bounds and builds the hull mask. Fewer than three
    /// (or collinear) landmarks fall back to the ellipse mask with a warning.
    pub fn from_parts(image: ImageF, landmarks: Vec<Point>, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        let (h, w) = image.dims();
        check_bounds(&landmarks, h, w)?;
        let hull_mask = match convex_hull(&landmarks) {
            Ok(hull) => rasterize_hull(&hull, h, w),
            Err(e) => {
                if !landmarks.is_empty() {
                    log::warn!("{source_id}: {e}; using fallback ellipse mask");
                }
                fallback_ellipse_mask(h, w)?
            }
        };
        Ok(Self {
            image,
            landmarks,
            hull_mask,
            source_id,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// Same record with a different image of the same size (e.g. after
    /// post-processing).
    pub fn with_image(&self, image: ImageF) -> Result<Self> {
        self.image.same_shape(&image)?;
        Ok(Self {
            image,
            ..self.clone()
        })
    }
}

fn check_bounds(landmarks: &[Point], height: usize, width: usize) -> Result<()> {
    for (index, p) in landmarks.iter().enumerate() {
        let inside = p.x.is_finite()
            && p.y.is_finite()
            && p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (width - 1) as f64
            && p.y <= (height - 1) as f64;
        if !inside {
            return Err(CamoError::LandmarkOutOfBounds {
                index,
                x: p.x,
                y: p.y,
                width,
                height,
            });
        }
    }
    Ok(())
}

pub fn load_landmarks(path: &Path) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path).map_err(|e| CamoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CamoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn save_landmarks(path: &Path, landmarks: &[Point]) -> Result<()> {
    let text = serde_json::to_string(landmarks).expect("points serialize");
    std::fs::write(path, text).map_err(|e| CamoError::io(path, e))
}

/// Loads an image (and optional landmark file), bilinear-resizing to `size`
/// (`(height, width)`) when given. Landmarks are bounds-checked against the
/// source image and then scaled with the image.
pub fn load_face_record(
    image_path: &Path,
    landmarks_path: Option<&Path>,
    size: Option<(usize, usize)>,
) -> Result<FaceRecord> {
    let image = ImageF::load(image_path)?;
    let (h, w) = image.dims();
    let mut landmarks = match landmarks_path {
        Some(p) => load_landmarks(p)?,
        None => Vec::new(),
    };
    check_bounds(&landmarks, h, w)?;
    let image = match size {
        Some((th, tw)) if (th, tw) != (h, w) => {
            let sx = tw as f64 / w as f64;
            let sy = th as f64 / h as f64;
            for p in &mut landmarks {
                p.x = ((p.x + 0.5) * sx - 0.5).clamp(0.0, (tw - 1) as f64);
                p.y = ((p.y + 0.5) * sy - 0.5).clamp(0.0, (th - 1) as f64);
            }
            image.resize_bilinear(th, tw)
        }
        _ => image,
    };
    let source_id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if landmarks.len() < 3 {
        log::warn!(
            "{}: {} landmarks, using fallback ellipse mask",
            image_path.display(),
            landmarks.len()
        );
    }
    FaceRecord::from_parts(image, landmarks, source_id)
}
