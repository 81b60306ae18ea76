//! Procedural face corpus for desk-scale runs.
//!
//! Real face datasets are not bundled, so training and acceptance runs use
//! synthetic portraits: a textured background, hair, an oval face with eyes,
//! brows, nose and mouth, multi-scale skin texture, and per-image sensor
//! noise. Each image comes with 68 landmarks in the usual jaw / brows /
//! nose / eyes / mouth layout; the jaw and brows define the hull.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CamoError, Result};
use crate::image::ImageF;
use crate::landmarks::{save_landmarks, FaceRecord, Point};
use crate::manifest::{DatasetManifest, Label, ManifestEntry, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    /// Every `test_every`-th image goes to the test split.
    pub test_every: usize,
    /// Face size relative to the frame; larger values give tighter crops.
    pub face_scale: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            count: 600,
            size: 128,
            seed: 7,
            test_every: 4,
            face_scale: 1.0,
        }
    }
}

impl CorpusConfig {
    pub fn split_of(&self, index: usize) -> Split {
        if self.test_every > 0 && index % self.test_every == self.test_every - 1 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

pub struct SyntheticFace {
    pub image: ImageF,
    pub landmarks: Vec<Point>,
}

/// Smooth value noise: Gaussian lattice values every `cell` pixels,
/// bilinearly interpolated. Roughly unit variance at lattice points.
fn value_noise(h: usize, w: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if cell <= 1.0 {
        return (0..h * w).map(|_| StandardNormal.sample(rng)).collect();
    }
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gh * gw).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let fy = y as f64 / cell;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let a = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let b = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out[y * w + x] = a * (1.0 - ty) + b * ty;
        }
    }
    out
}

/// Sum of value-noise octaves with the given `(cell, amplitude)` pairs.
fn texture(h: usize, w: usize, octaves: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t = vec![0.0; h * w];
    for &(cell, amp) in octaves {
        for (v, n) in t.iter_mut().zip(value_noise(h, w, cell, rng)) {
            *v += amp * n;
        }
    }
    t
}

/// Coverage of an anti-aliased ellipse at `(x, y)`: 1 inside, 0 outside,
/// linear over about `soft` pixels at the edge.
fn ellipse_alpha(x: f64, y: f64, cx: f64, cy: f64, a: f64, b: f64, soft: f64) -> f64 {
    let dx = (x - cx) / a;
    let dy = (y - cy) / b;
    let r = (dx * dx + dy * dy).sqrt();
    let dist = (r - 1.0) * a.min(b);
    (0.5 - dist / soft).clamp(0.0, 1.0)
}

fn paint(px: &mut [f64; 3], color: [f64; 3], alpha: f64) {
    if alpha > 0.0 {
        for c in 0..3 {
            px[c] = px[c] * (1.0 - alpha) + color[c] * alpha;
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: [f64; 3], spread: f64) -> [f64; 3] {
    let shift = rng.random_range(-spread..spread);
    [0, 1, 2].map(|c| (base[c] + shift + rng.random_range(-spread..spread) * 0.4).clamp(0.02, 0.98))
}

/// Renders face `index` of the corpus keyed by `seed`.
pub fn synth_face(size: usize, face_scale: f64, seed: u64, index: u64) -> SyntheticFace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (h, w) = (size, size);
    let s = size as f64 / 128.0;

    let cx = w as f64 / 2.0 + rng.random_range(-5.0..5.0) * s;
    let cy = h as f64 / 2.0 + rng.random_range(0.0..8.0) * s / face_scale;
    let a = rng.random_range(29.0..36.0) * s * face_scale;
    let b = rng.random_range(39.0..46.0) * s * face_scale;

    let skin_palette = [
        [0.93, 0.76, 0.64],
        [0.85, 0.64, 0.50],
        [0.70, 0.50, 0.38],
        [0.50, 0.34, 0.24],
        [0.96, 0.82, 0.72],
    ];
    let base = skin_palette[rng.random_range(0..skin_palette.len())];
    let skin = jitter(&mut rng, base, 0.05);
    let hair = jitter(&mut rng, [0.12, 0.09, 0.07], 0.08);
    let bg = [0, 1, 2].map(|_| rng.random_range(0.15..0.85));
    let cloth = [0, 1, 2].map(|_| rng.random_range(0.1..0.9));
    let grad = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    let light = (rng.random_range(-0.15..0.15), rng.random_range(-0.12..0.05));

    let blobs: Vec<(f64, f64, f64, f64, [f64; 3])> = (0..rng.random_range(3..7))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(6.0..30.0) * s,
                rng.random_range(6.0..30.0) * s,
                [0, 1, 2].map(|_| rng.random_range(0.1..0.9)),
            )
        })
        .collect();

    let bg_amp = rng.random_range(0.6..1.4);
    let bg_tex = texture(
        h,
        w,
        &[(1.0, 0.010 * bg_amp), (2.0, 0.012 * bg_amp), (4.0, 0.016 * bg_amp), (9.0, 0.025 * bg_amp)],
        &mut rng,
    );
    let skin_amp = rng.random_range(0.7..1.3);
    let skin_tex = texture(
        h,
        w,
        &[(1.0, 0.010 * skin_amp), (2.0, 0.012 * skin_amp), (3.0, 0.012 * skin_amp), (6.0, 0.012 * skin_amp)],
        &mut rng,
    );
    let strands = {
        let mut t = vec![0.0; h * w];
        let coarse = value_noise(h, w / 2 + 1, 1.0, &mut rng);
        for y in 0..h {
            for x in 0..w {
                let yy = (y as f64 / 6.0) as usize;
                t[y * w + x] = coarse[yy.min(h - 1) * (w / 2 + 1) + x / 2] * 0.05;
            }
        }
        t
    };

    // Feature geometry (relative to the face ellipse).
    let eye_y = cy - 0.12 * b;
    let eye_dx = 0.40 * a;
    let eye_rx = 0.20 * a;
    let eye_ry = 0.075 * b;
    let brow_y = cy - 0.30 * b;
    let mouth_y = cy + 0.50 * b;
    let mouth_rx = 0.36 * a;
    let mouth_ry = 0.07 * b;
    let nose_y = cy + 0.22 * b;
    let iris = jitter(&mut rng, [0.25, 0.18, 0.12], 0.1);
    let lips = jitter(&mut rng, [0.70, 0.35, 0.35], 0.06);

    let mut data = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let i = y * w + x;
            let g = grad.0 * (xf / w as f64 - 0.5) + grad.1 * (yf / h as f64 - 0.5);
            let mut px = [0, 1, 2].map(|c| bg[c] + g + bg_tex[i]);
            for &(bx, by, ba, bb, col) in &blobs {
                paint(&mut px, col.map(|v| v + bg_tex[i]), 0.6 * ellipse_alpha(xf, yf, bx, by, ba, bb, 3.0 * s));
            }
            // shoulders and neck
            paint(&mut px, cloth.map(|v| v + bg_tex[i] * 0.5), ellipse_alpha(xf, yf, cx, cy + 2.0 * b, 2.0 * a, 0.9 * b, 2.0));
            let neck = if (xf - cx).abs() < 0.55 * a && yf > cy && yf < cy + 1.3 * b { 1.0 } else { 0.0 };
            paint(&mut px, skin.map(|v| v * 0.8 + skin_tex[i]), neck);
            // hair behind the face
            paint(
                &mut px,
                hair.map(|v| v + strands[i]),
                ellipse_alpha(xf, yf, cx, cy - 0.22 * b, 1.13 * a, 0.92 * b, 2.0),
            );

            // face with shading
            let fa = ellipse_alpha(xf, yf, cx, cy, a, b, 1.5);
            if fa > 0.0 {
                let nx = (xf - cx) / a;
                let ny = (yf - cy) / b;
                let r2 = nx * nx + ny * ny;
                let shade = 1.0 + light.0 * nx + light.1 * ny - 0.16 * r2 * r2;
                let mut face = skin.map(|v| v * shade + skin_tex[i]);
                // fringe of hair over the forehead
                let fringe = ((cy - 0.55 * b - yf) / (2.0 * s)).clamp(0.0, 1.0) * (1.0 - 0.25 * (nx * 3.0).sin().abs());
                paint(&mut face, hair.map(|v| v + strands[i]), fringe);
                for side in [-1.0, 1.0] {
                    let ex = cx + side * eye_dx;
                    // brows
                    let arch = brow_y - 0.05 * b * (1.0 - ((xf - ex) / (0.28 * a)).powi(2));
                    if (xf - ex).abs() < 0.28 * a && (yf - arch).abs() < 1.6 * s {
                        paint(&mut face, hair.map(|v| v + strands[i] * 0.5), 0.85);
                    }
                    // eyes
                    paint(&mut face, [0.92, 0.90, 0.88].map(|v| v + skin_tex[i] * 0.3), ellipse_alpha(xf, yf, ex, eye_y, eye_rx, eye_ry, 1.2));
                    paint(&mut face, iris, ellipse_alpha(xf, yf, ex, eye_y, 0.42 * eye_ry * 2.0, 0.9 * eye_ry, 1.0));
                    paint(&mut face, [0.03, 0.03, 0.03], ellipse_alpha(xf, yf, ex, eye_y, 0.4 * eye_ry, 0.4 * eye_ry, 1.0));
                    // nostrils
                    paint(&mut face, skin.map(|v| v * 0.45), ellipse_alpha(xf, yf, cx + side * 0.1 * a, nose_y, 0.06 * a, 0.035 * b, 1.0));
                }
                // nose ridge shadow
                if (xf - cx - 0.06 * a).abs() < 1.2 * s && yf > eye_y && yf < nose_y {
                    paint(&mut face, skin.map(|v| v * 0.82), 0.6);
                }
                // mouth
                paint(&mut face, lips.map(|v| v + skin_tex[i] * 0.5), ellipse_alpha(xf, yf, cx, mouth_y, mouth_rx, mouth_ry, 1.2));
                if (xf - cx).abs() < mouth_rx * 0.9 && (yf - mouth_y).abs() < 0.6 * s {
                    paint(&mut face, lips.map(|v| v * 0.45), 0.9);
                }
                paint(&mut px, face, fa);
            }
            data[i * 3..i * 3 + 3].copy_from_slice(&px);
        }
    }

    let sensor = Normal::new(0.0, rng.random_range(0.004..0.008)).expect("positive std");
    for v in &mut data {
        *v = (*v + sensor.sample(&mut rng)).clamp(0.0, 1.0);
    }
    let image = ImageF::from_clamped(h, w, data)
        .expect("dimensions are consistent")
        .quantized();

    let landmarks = face_landmarks(cx, cy, a, b, eye_y, eye_dx, eye_rx, eye_ry, brow_y, nose_y, mouth_y, mouth_rx, mouth_ry)
        .into_iter()
        .map(|p| {
            Point::new(
                (p.x.clamp(0.0, (w - 1) as f64) * 100.0).round() / 100.0,
                (p.y.clamp(0.0, (h - 1) as f64) * 100.0).round() / 100.0,
            )
        })
        .collect();
    SyntheticFace { image, landmarks }
}

#[allow(clippy::too_many_arguments)]
fn face_landmarks(
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    eye_y: f64,
    eye_dx: f64,
    eye_rx: f64,
    eye_ry: f64,
    brow_y: f64,
    nose_y: f64,
    mouth_y: f64,
    mouth_rx: f64,
    mouth_ry: f64,
) -> Vec<Point> {
    let mut pts = Vec::with_capacity(68);
    // jaw 0..17, from the left temple under the chin to the right temple
    let start = std::f64::consts::PI + 0.10;
    let sweep = std::f64::consts::PI + 0.20;
    for i in 0..17 {
        let t = start - sweep * i as f64 / 16.0;
        pts.push(Point::new(cx + 0.97 * a * t.cos(), cy + 0.97 * b * t.sin()));
    }
    // brows 17..27
    for side in [-1.0, 1.0] {
        for j in 0..5 {
            let u = j as f64 / 4.0;
            let x = if side < 0.0 {
                cx - eye_dx - 0.28 * a + u * 0.56 * a
            } else {
                cx + eye_dx - 0.28 * a + u * 0.56 * a
            };
            let rel = (x - (cx + side * eye_dx)) / (0.28 * a);
            pts.push(Point::new(x, brow_y - 0.05 * b * (1.0 - rel * rel)));
        }
    }
    // nose 27..36
    for j in 0..4 {
        pts.push(Point::new(cx, eye_y + (nose_y - eye_y) * j as f64 / 3.0));
    }
    for j in 0..5 {
        pts.push(Point::new(cx + (j as f64 - 2.0) * 0.06 * a, nose_y + 0.03 * b));
    }
    // eyes 36..48
    for side in [-1.0, 1.0] {
        for j in 0..6 {
            let t = std::f64::consts::PI * 2.0 * j as f64 / 6.0;
            pts.push(Point::new(cx + side * eye_dx + eye_rx * t.cos(), eye_y + eye_ry * t.sin()));
        }
    }
    // mouth 48..68
    for j in 0..12 {
        let t = std::f64::consts::PI * 2.0 * j as f64 / 12.0;
        pts.push(Point::new(cx + mouth_rx * t.cos(), mouth_y + mouth_ry * t.sin()));
    }
    for j in 0..8 {
        let t = std::f64::consts::PI * 2.0 * j as f64 / 8.0;
        pts.push(Point::new(cx + 0.6 * mouth_rx * t.cos(), mouth_y + 0.4 * mouth_ry * t.sin()));
    }
    pts
}

/// In-memory corpus with split tags, for library-level runs.
pub fn synth_records(cfg: &CorpusConfig) -> Result<Vec<(FaceRecord, Split)>> {
    (0..cfg.count)
        .map(|i| {
            let face = synth_face(cfg.size, cfg.face_scale, cfg.seed, i as u64);
            let rec = FaceRecord::from_parts(face.image, face.landmarks, format!("face_{i:05}"))?;
            Ok((rec, cfg.split_of(i)))
        })
        .collect()
}

/// Writes `images/face_NNNNN.png`, `landmarks/face_NNNNN.json` and
/// `manifest.json` (relative paths) under `dir`.
pub fn write_corpus(dir: &Path, cfg: &CorpusConfig) -> Result<DatasetManifest> {
    if cfg.size < 16 {
        return Err(CamoError::Config(format!("corpus size {} is below 16 px", cfg.size)));
    }
    let images = dir.join("images");
    let marks = dir.join("landmarks");
    for d in [&images, &marks] {
        std::fs::create_dir_all(d).map_err(|e| CamoError::io(d, e))?;
    }
    let mut manifest = DatasetManifest::default();
    for i in 0..cfg.count {
        let face = synth_face(cfg.size, cfg.face_scale, cfg.seed, i as u64);
        let name = format!("face_{i:05}");
        face.image.save_png(&images.join(format!("{name}.png")))?;
        save_landmarks(&marks.join(format!("{name}.json")), &face.landmarks)?;
        manifest.entries.push(ManifestEntry {
            image: format!("images/{name}.png").into(),
            landmarks: Some(format!("landmarks/{name}.json").into()),
            split: cfg.split_of(i),
            label: Label::Real,
        });
    }
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}
