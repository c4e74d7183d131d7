//! Epoch bundle directories: `landscape.png`, `bundle.json` and `raster.bin`.

use std::path::Path;

use tracevis_core::landscape::{decode_raster, encode_raster, EpochBundle, BundleMeta, LandscapeRaster, BUNDLE_VERSION};

use crate::error::{Error, Result};
use crate::store::{read_artifact, read_json, write_atomic, write_json};

pub const PNG_FILE: &str = "landscape.png";
pub const META_FILE: &str = "bundle.json";
pub const RASTER_FILE: &str = "raster.bin";

pub fn encode_png(rgb: &[u8], width: usize, height: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let fail = |e: png::EncodingError| Error::Config(format!("png encoding failed: {e}"));
        let mut writer = enc.write_header().map_err(fail)?;
        writer.write_image_data(rgb).map_err(fail)?;
    }
    Ok(out)
}

/// Decodes an 8-bit RGB PNG into `(width, height, pixels)`.
pub fn decode_png(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("image too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err("expected 8-bit RGB".into());
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

pub fn landscape_png(raster: &LandscapeRaster, meta: &BundleMeta) -> Result<Vec<u8>> {
    let rgb = meta.palette.paint(raster, meta.class_count);
    encode_png(&rgb, raster.width, raster.height)
}

pub fn export_bundle(bundle: &EpochBundle, dir: &Path) -> Result<()> {
    let (meta, raster) = (&bundle.meta, &bundle.raster);
    if raster.width != meta.width || raster.height != meta.height {
        return Err(Error::Config("raster size disagrees with bundle metadata".into()));
    }
    write_atomic(&dir.join(RASTER_FILE), &encode_raster(raster))?;
    write_atomic(&dir.join(PNG_FILE), &landscape_png(raster, meta)?)?;
    // metadata last so a readable bundle.json implies the payloads are complete
    write_json(&dir.join(META_FILE), meta)
}

pub fn load_bundle_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join(META_FILE);
    let value: serde_json::Value = read_json(&path)?;
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(BUNDLE_VERSION as u64) {
        return Err(Error::format(&path, format!("unsupported bundle version {version:?} (expected {BUNDLE_VERSION})")));
    }
    serde_json::from_value(value).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn load_bundle(dir: &Path) -> Result<EpochBundle> {
    let meta = load_bundle_meta(dir)?;
    let path = dir.join(RASTER_FILE);
    let raster = decode_raster(&read_artifact(&path)?, meta.extent).map_err(|e| Error::format(&path, e.to_string()))?;
    if raster.width != meta.width || raster.height != meta.height {
        return Err(Error::format(&path, "raster size disagrees with bundle metadata"));
    }
    Ok(EpochBundle { meta, raster })
}
