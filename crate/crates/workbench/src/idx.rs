//! Reader for the IDX format used by MNIST-style image sets.

use std::path::Path;

use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Images as rows of pixel intensities scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f32>,
}

pub fn parse_images(bytes: &[u8], limit: Option<usize>) -> std::result::Result<IdxImages, String> {
    if bytes.len() < 16 {
        return Err("truncated header".into());
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGES_MAGIC {
        return Err(format!("bad magic {magic:#010x} for an image file"));
    }
    let (total, rows, cols) = (be_u32(bytes, 4) as usize, be_u32(bytes, 8) as usize, be_u32(bytes, 12) as usize);
    let size = rows * cols;
    if bytes.len() != 16 + total * size {
        return Err(format!("expected {} payload bytes, found {}", total * size, bytes.len() - 16));
    }
    let count = limit.map_or(total, |l| l.min(total));
    let pixels = bytes[16..16 + count * size].iter().map(|&b| b as f32 / 255.0).collect();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn parse_labels(bytes: &[u8], limit: Option<usize>) -> std::result::Result<Vec<usize>, String> {
    if bytes.len() < 8 {
        return Err("truncated header".into());
    }
    let magic = be_u32(bytes, 0);
    if magic != LABELS_MAGIC {
        return Err(format!("bad magic {magic:#010x} for a label file"));
    }
    let total = be_u32(bytes, 4) as usize;
    if bytes.len() != 8 + total {
        return Err(format!("expected {total} labels, found {}", bytes.len() - 8));
    }
    let count = limit.map_or(total, |l| l.min(total));
    Ok(bytes[8..8 + count].iter().map(|&b| b as usize).collect())
}

pub fn read_images(path: &Path, limit: Option<usize>) -> Result<IdxImages> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_images(&bytes, limit).map_err(|m| Error::format(path, m))
}

pub fn read_labels(path: &Path, limit: Option<usize>) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&bytes, limit).map_err(|m| Error::format(path, m))
}

/// Encodes images in IDX form, mainly for fixtures.
pub fn encode_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
