//! Classification landscape rasters and per-epoch bundles.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boundary::rescaled_margin;
use crate::error::{precondition, Error, Result};
use crate::metrics::{EpochMetrics, TemporalMetrics};
use crate::numerics::{softmax, top2, Matrix};
use crate::subject::{SubjectCheckpoint, Split};
use crate::visualizer::VisualizationModel;

pub const RASTER_MAGIC: [u8; 4] = *b"DVIR";
pub const RASTER_VERSION: u32 = 1;
pub const BUNDLE_VERSION: u32 = 1;
pub const MIN_RESOLUTION: usize = 50;
/// Decoder rows evaluated per block.
pub const RENDER_BLOCK: usize = 4096;

/// Axis-aligned window of the embedding plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f32,
    pub x_max: f32,
    pub y_min: f32,
    pub y_max: f32,
}

impl Extent {
    /// Bounding box of `points` (N×2) grown by `pad` of its span on every side.
    pub fn around(points: &Matrix, pad: f32) -> Result<Self> {
        if points.cols() != 2 || points.rows() == 0 {
            return Err(Error::Dimension { op: "extent", expected: (1, 2), found: points.shape() });
        }
        if !points.is_finite() {
            return Err(Error::DegenerateInput("non-finite embedding coordinates"));
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f32::INFINITY, f32::NEG_INFINITY, f32::INFINITY, f32::NEG_INFINITY);
        for r in points.iter_rows() {
            x0 = x0.min(r[0]);
            x1 = x1.max(r[0]);
            y0 = y0.min(r[1]);
            y1 = y1.max(r[1]);
        }
        let grow = |lo: f32, hi: f32| {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (lo - pad * span, hi + pad * span)
        };
        let (x_min, x_max) = grow(x0, x1);
        let (y_min, y_max) = grow(y0, y1);
        Ok(Extent { x_min, x_max, y_min, y_max })
    }

    pub fn contains(&self, x: f32, y: f32) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    /// Center of pixel `(row, col)`; row 0 is the top (largest y).
    pub fn pixel_center(&self, row: usize, col: usize, width: usize, height: usize) -> (f32, f32) {
        let x = self.x_min + (col as f32 + 0.5) / width as f32 * (self.x_max - self.x_min);
        let y = self.y_max - (row as f32 + 0.5) / height as f32 * (self.y_max - self.y_min);
        (x, y)
    }

    /// Pixel containing `(x, y)`, if inside the extent.
    pub fn locate(&self, x: f32, y: f32, width: usize, height: usize) -> Option<(usize, usize)> {
        if !self.contains(x, y) {
            return None;
        }
        let col = ((x - self.x_min) / (self.x_max - self.x_min) * width as f32) as usize;
        let row = ((self.y_max - y) / (self.y_max - self.y_min) * height as f32) as usize;
        Some((row.min(height - 1), col.min(width - 1)))
    }

    pub fn diameter(&self) -> f32 {
        libm::hypotf(self.x_max - self.x_min, self.y_max - self.y_min)
    }
}

/// How pixel confidence is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shading {
    /// Softmax probability of the top class.
    #[default]
    Softmax,
    /// Min-max-rescaled gap between the top two logits.
    Margin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeRaster {
    pub width: usize,
    pub height: usize,
    pub extent: Extent,
    /// Row-major predicted class per pixel.
    pub classes: Vec<u8>,
    pub confidence: Vec<f32>,
    pub boundary: Vec<bool>,
}

impl LandscapeRaster {
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }
}

/// Class, confidence and boundary flag for one row of logits, as stored in a raster.
pub fn classify_logits(logits: &[f32], delta: f32, shading: Shading) -> (u8, f32, bool) {
    let (first, _) = top2(logits).expect("at least two classes");
    let margin = rescaled_margin(logits).ok();
    // constant logits have no defined margin and sit on every boundary at once
    let flagged = margin.is_none_or(|m| m <= delta);
    let confidence = match shading {
        Shading::Softmax => softmax(logits)[first],
        Shading::Margin => margin.unwrap_or(0.0),
    };
    (first as u8, confidence, flagged)
}

/// Evaluates `g(ψ(y))` at every pixel center of `extent`.
pub fn render_landscape(
    model: &VisualizationModel,
    ckpt: &SubjectCheckpoint,
    extent: Extent,
    width: usize,
    height: usize,
    delta: f32,
    shading: Shading,
) -> Result<LandscapeRaster> {
    if width < MIN_RESOLUTION || height < MIN_RESOLUTION {
        return Err(precondition(alloc::format!("resolution must be at least {MIN_RESOLUTION}×{MIN_RESOLUTION}")));
    }
    if ckpt.class_count() > u8::MAX as usize + 1 {
        return Err(precondition("rasters store classes as bytes; at most 256 classes"));
    }
    if model.rep_dim() != ckpt.rep_dim() {
        return Err(Error::Dimension { op: "render", expected: (1, ckpt.rep_dim()), found: (1, model.rep_dim()) });
    }
    let total = width * height;
    let mut classes = Vec::with_capacity(total);
    let mut confidence = Vec::with_capacity(total);
    let mut boundary = Vec::with_capacity(total);
    for start in (0..total).step_by(RENDER_BLOCK) {
        let end = (start + RENDER_BLOCK).min(total);
        let mut centers = Vec::with_capacity(2 * (end - start));
        for p in start..end {
            let (x, y) = extent.pixel_center(p / width, p % width, width, height);
            centers.push(x);
            centers.push(y);
        }
        let reps = model.inverse_project(&Matrix::from_vec(end - start, 2, centers)?)?;
        for (i, row) in reps.iter_rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                let p = start + i;
                return Err(Error::Render { row: p / width, col: p % width });
            }
        }
        let logits = ckpt.logits(&reps)?;
        for (i, row) in logits.iter_rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                let p = start + i;
                return Err(Error::Render { row: p / width, col: p % width });
            }
            let (c, conf, flag) = classify_logits(row, delta, shading);
            classes.push(c);
            confidence.push(conf);
            boundary.push(flag);
        }
    }
    Ok(LandscapeRaster { width, height, extent, classes, confidence, boundary })
}

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
/// Color of the least confident pixels before blending toward the class color.
pub const PALE: [f32; 3] = [244.0, 244.0, 244.0];

/// One base color per class; white is reserved for boundary pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub colors: Vec<Rgb>,
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> Rgb {
    let h6 = (h % 1.0) * 6.0;
    let sector = libm::floorf(h6);
    let f = h6 - sector;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let q8 = |x: f32| libm::roundf(x * 255.0) as u8;
    [q8(r), q8(g), q8(b)]
}

impl Palette {
    /// Evenly spread hues (golden-angle steps past ten classes) at fixed saturation and value.
    pub fn distinct(classes: usize) -> Self {
        let colors = (0..classes)
            .map(|c| {
                let hue = if classes <= 10 { c as f32 / 10.0 } else { (c as f32 * 0.618_034) % 1.0 };
                hsv_to_rgb(hue, 0.7, 0.85)
            })
            .collect();
        Palette { colors }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.colors.len() < classes {
            return Err(precondition(alloc::format!("palette has {} colors for {classes} classes", self.colors.len())));
        }
        for (i, c) in self.colors.iter().enumerate() {
            if c.iter().any(|&v| v as f32 >= PALE[0]) {
                return Err(precondition(alloc::format!("palette color {i} is too light to shade against white")));
            }
            if self.colors[..i].contains(c) {
                return Err(precondition(alloc::format!("palette color {i} repeats an earlier color")));
            }
        }
        Ok(())
    }

    /// Blend from pale (confidence at chance level `1/C`) to the full class color (confidence 1).
    pub fn shade_f32(&self, class: usize, confidence: f32, classes: usize) -> [f32; 3] {
        let chance = 1.0 / classes.max(2) as f32;
        let t = ((confidence - chance) / (1.0 - chance)).clamp(0.0, 1.0);
        let base = self.colors[class];
        core::array::from_fn(|i| PALE[i] + t * (base[i] as f32 - PALE[i]))
    }

    pub fn shade(&self, class: usize, confidence: f32, classes: usize) -> Rgb {
        self.shade_f32(class, confidence, classes).map(|v| libm::roundf(v) as u8)
    }

    /// 8-bit RGB pixels, row-major, white on boundary pixels.
    pub fn paint(&self, raster: &LandscapeRaster, classes: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(raster.classes.len() * 3);
        for ((&c, &conf), &flag) in raster.classes.iter().zip(&raster.confidence).zip(&raster.boundary) {
            let px = if flag { WHITE } else { self.shade(c as usize, conf, classes) };
            out.extend_from_slice(&px);
        }
        out
    }
}

/// Serializes class/flag grid and confidences behind a 16-byte header.
pub fn encode_raster(raster: &LandscapeRaster) -> Vec<u8> {
    let n = raster.width * raster.height;
    let mut out = Vec::with_capacity(16 + 6 * n);
    out.extend_from_slice(&RASTER_MAGIC);
    out.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    out.extend_from_slice(&(raster.width as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height as u32).to_le_bytes());
    for (&c, &b) in raster.classes.iter().zip(&raster.boundary) {
        out.push(c);
        out.push(b as u8);
    }
    for c in &raster.confidence {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_raster`]; the extent is stored alongside in the bundle metadata.
pub fn decode_raster(bytes: &[u8], extent: Extent) -> Result<LandscapeRaster> {
    let corrupt = |what: &str| Error::Precondition(alloc::format!("corrupt raster payload: {what}"));
    if bytes.len() < 16 || bytes[..4] != RASTER_MAGIC {
        return Err(corrupt("bad header"));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let version = word(4);
    if version != RASTER_VERSION {
        return Err(Error::Precondition(alloc::format!("unsupported raster version {version}")));
    }
    let (width, height) = (word(8) as usize, word(12) as usize);
    let n = width.checked_mul(height).ok_or_else(|| corrupt("size overflow"))?;
    if bytes.len() != 16 + 6 * n {
        return Err(corrupt("length does not match dimensions"));
    }
    let grid = &bytes[16..16 + 2 * n];
    let mut classes = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    for pair in grid.chunks_exact(2) {
        classes.push(pair[0]);
        boundary.push(match pair[1] {
            0 => false,
            1 => true,
            _ => return Err(corrupt("boundary flag out of range")),
        });
    }
    let confidence = bytes[16 + 2 * n..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(LandscapeRaster { width, height, extent, classes, confidence, boundary })
}

/// One embedded sample as shown to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub split: Split,
    pub x: f32,
    pub y: f32,
    pub label: usize,
    pub predicted: usize,
    pub confidence: f32,
}

/// Everything about one epoch except the raster payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub version: u32,
    pub epoch: usize,
    pub method: String,
    pub class_count: usize,
    pub width: usize,
    pub height: usize,
    pub extent: Extent,
    pub delta: f32,
    pub shading: Shading,
    pub palette: Palette,
    pub embeddings: Vec<SampleRecord>,
    pub metrics: Vec<EpochMetrics>,
    pub temporal: Vec<TemporalMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochBundle {
    pub meta: BundleMeta,
    pub raster: LandscapeRaster,
}

/// Embeds a split and records the subject's own prediction for every sample.
pub fn sample_records(
    model: &VisualizationModel,
    ckpt: &SubjectCheckpoint,
    reps: &Matrix,
    labels: &[usize],
    ids: &[u64],
    split: Split,
) -> Result<(Matrix, Vec<SampleRecord>)> {
    if labels.len() != reps.rows() || ids.len() != reps.rows() {
        return Err(Error::Dimension { op: "sample records", expected: (reps.rows(), 1), found: (labels.len(), ids.len()) });
    }
    let emb = model.project(reps)?;
    let logits = ckpt.logits(reps)?;
    let records = (0..reps.rows())
        .map(|i| {
            let row = logits.row(i);
            let (predicted, _) = top2(row).expect("at least two classes");
            SampleRecord {
                id: ids[i],
                split,
                x: emb[(i, 0)],
                y: emb[(i, 1)],
                label: labels[i],
                predicted,
                confidence: softmax(row)[predicted],
            }
        })
        .collect();
    Ok((emb, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub x: f32,
    pub y: f32,
    pub predicted: usize,
    pub confidence: f32,
}

/// Positions and predictions of one sample across bundles, in epoch order.
pub fn sample_trajectory(bundles: &[&BundleMeta], id: u64) -> Result<Vec<TrajectoryPoint>> {
    let mut points = Vec::with_capacity(bundles.len());
    for b in bundles {
        let rec = b
            .embeddings
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::NotFound(alloc::format!("sample {id} in epoch {}", b.epoch)))?;
        points.push(TrajectoryPoint { epoch: b.epoch, x: rec.x, y: rec.y, predicted: rec.predicted, confidence: rec.confidence });
    }
    points.sort_by_key(|p| p.epoch);
    if points.windows(2).any(|w| w[0].epoch == w[1].epoch) {
        return Err(precondition("bundles repeat an epoch"));
    }
    Ok(points)
}
