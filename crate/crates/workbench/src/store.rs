//! On-disk formats for checkpoints, boundary sets, complexes and visualization models.
//!
//! Parameters are stored as flat little-endian `f32` files next to a JSON manifest
//! describing the layer shapes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracevis_core::boundary::{BoundarySet, PairStats, Provenance};
use tracevis_core::complex::{BavrComplex, Edge, EdgeKind};
use tracevis_core::numerics::{Activation, Matrix, MlpParams};
use tracevis_core::subject::{validate_sequence, SubjectCheckpoint};
use tracevis_core::visualizer::{CurveParams, FitReport, VisualizationModel};

use crate::config::Metric;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn epoch_stem(epoch: usize) -> String {
    format!("epoch_{epoch:03}")
}

/// Writes through a temporary file so readers never see a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads an artifact produced by an earlier stage.
pub fn read_artifact(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_artifact(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

pub fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    write_atomic(path, &f32_bytes(values))
}

pub fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = read_artifact(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "length is not a multiple of 4 bytes"));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl NetSpec {
    pub fn of(net: &MlpParams) -> Self {
        NetSpec { layer_sizes: net.layer_sizes(), activations: net.activations() }
    }

    fn parameter_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn build(&self, flat: &[f32]) -> Result<MlpParams, tracevis_core::Error> {
        MlpParams::from_flat(&self.layer_sizes, &self.activations, flat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEpochEntry {
    pub file: String,
    #[serde(default)]
    pub train_accuracy: Option<f32>,
}

/// `{epoch → file, layer shapes, d, h, C}` for a checkpoint sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectManifest {
    pub version: u32,
    pub d: usize,
    pub h: usize,
    pub classes: usize,
    pub feature_net: NetSpec,
    pub head: NetSpec,
    pub epochs: BTreeMap<usize, SubjectEpochEntry>,
}

pub fn save_checkpoints(dir: &Path, checkpoints: &[SubjectCheckpoint]) -> Result<PathBuf> {
    let first = checkpoints.first().ok_or_else(|| Error::Config("no checkpoints to save".into()))?;
    validate_sequence(checkpoints)?;
    let mut epochs = BTreeMap::new();
    for ckpt in checkpoints {
        let file = format!("{}.f32", epoch_stem(ckpt.epoch));
        let mut flat = ckpt.feature_net.to_flat();
        flat.extend(ckpt.head.to_flat());
        write_f32(&dir.join(&file), &flat)?;
        epochs.insert(ckpt.epoch, SubjectEpochEntry { file, train_accuracy: ckpt.train_accuracy });
    }
    let manifest = SubjectManifest {
        version: FORMAT_VERSION,
        d: first.input_dim(),
        h: first.rep_dim(),
        classes: first.class_count(),
        feature_net: NetSpec::of(&first.feature_net),
        head: NetSpec::of(&first.head),
        epochs,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Loads every checkpoint listed in a manifest, in epoch order.
pub fn load_checkpoints(manifest_path: &Path) -> Result<Vec<SubjectCheckpoint>> {
    let m: SubjectManifest = read_json(manifest_path)?;
    if m.version != FORMAT_VERSION {
        return Err(Error::format(manifest_path, format!("unsupported manifest version {}", m.version)));
    }
    let consistent = m.feature_net.layer_sizes.first() == Some(&m.d)
        && m.feature_net.layer_sizes.last() == Some(&m.h)
        && m.head.layer_sizes.first() == Some(&m.h)
        && m.head.layer_sizes.last() == Some(&m.classes);
    if !consistent {
        return Err(Error::format(manifest_path, "layer sizes disagree with d, h and classes"));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let split = m.feature_net.parameter_count();
    let mut out = Vec::with_capacity(m.epochs.len());
    for (&epoch, entry) in &m.epochs {
        let path = dir.join(&entry.file);
        let flat = read_f32(&path)?;
        if flat.len() != split + m.head.parameter_count() {
            return Err(Error::format(&path, "parameter count does not match the manifest"));
        }
        let mut ckpt = SubjectCheckpoint::new(epoch, m.feature_net.build(&flat[..split])?, m.head.build(&flat[split..])?)?;
        ckpt.train_accuracy = entry.train_accuracy;
        out.push(ckpt);
    }
    validate_sequence(&out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryMeta {
    pub version: u32,
    pub epoch: usize,
    pub count: usize,
    pub dim: usize,
    pub provenance: Vec<Provenance>,
    pub stats: PairStats,
}

pub fn save_boundary(dir: &Path, epoch: usize, set: &BoundarySet) -> Result<()> {
    let stem = epoch_stem(epoch);
    write_f32(&dir.join(format!("{stem}.f32")), set.points.as_slice())?;
    let meta = BoundaryMeta {
        version: FORMAT_VERSION,
        epoch,
        count: set.points.rows(),
        dim: set.points.cols(),
        provenance: set.provenance.clone(),
        stats: set.stats.clone(),
    };
    write_json(&dir.join(format!("{stem}.json")), &meta)
}

pub fn load_boundary(dir: &Path, epoch: usize) -> Result<BoundarySet> {
    let stem = epoch_stem(epoch);
    let meta_path = dir.join(format!("{stem}.json"));
    let meta: BoundaryMeta = read_json(&meta_path)?;
    let path = dir.join(format!("{stem}.f32"));
    let flat = read_f32(&path)?;
    if flat.len() != meta.count * meta.dim || meta.provenance.len() != meta.count {
        return Err(Error::format(&path, "boundary payload does not match its sidecar"));
    }
    Ok(BoundarySet { points: Matrix::from_vec(meta.count, meta.dim, flat)?, provenance: meta.provenance, stats: meta.stats })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub xx: usize,
    pub xb: usize,
    pub bb: usize,
}

/// First line of a complex export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexHeader {
    pub version: u32,
    pub k: usize,
    pub metric: Metric,
    pub data_count: usize,
    pub boundary_count: usize,
    pub counts: EdgeCounts,
}

pub fn encode_complex(complex: &BavrComplex, metric: Metric) -> Vec<u8> {
    let header = ComplexHeader {
        version: FORMAT_VERSION,
        k: complex.k(),
        metric,
        data_count: complex.data_count(),
        boundary_count: complex.boundary_count(),
        counts: EdgeCounts { xx: complex.count(EdgeKind::Xx), xb: complex.count(EdgeKind::Xb), bb: complex.count(EdgeKind::Bb) },
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for e in complex.edges() {
        serde_json::to_writer(&mut out, e).expect("edge serializes");
        out.push(b'\n');
    }
    out
}

pub fn save_complex(path: &Path, complex: &BavrComplex, metric: Metric) -> Result<()> {
    write_atomic(path, &encode_complex(complex, metric))
}

pub fn load_complex(path: &Path) -> Result<(ComplexHeader, BavrComplex)> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().ok_or_else(|| Error::format(path, "empty complex file"))?.map_err(|e| Error::io(path, e))?;
    let header: ComplexHeader = serde_json::from_str(&first).map_err(|e| Error::format(path, e.to_string()))?;
    let mut edges = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let edge: Edge = serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))?;
        edges.push(edge);
    }
    let complex = BavrComplex::from_parts(header.k, header.data_count, header.boundary_count, edges)?;
    let counts = EdgeCounts { xx: complex.count(EdgeKind::Xx), xb: complex.count(EdgeKind::Xb), bb: complex.count(EdgeKind::Bb) };
    if counts != header.counts {
        return Err(Error::format(path, "edge counts disagree with the header"));
    }
    Ok((header, complex))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEpochEntry {
    pub file: String,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub version: u32,
    pub method: String,
    pub h: usize,
    pub encoder: NetSpec,
    pub decoder: NetSpec,
    pub curve: CurveParams,
    pub epochs: BTreeMap<usize, ModelEpochEntry>,
}

/// Saves one model sequence with the fit report of every epoch.
pub fn save_models(dir: &Path, method: &str, models: &[(VisualizationModel, FitReport)]) -> Result<PathBuf> {
    let (first, _) = models.first().ok_or_else(|| Error::Config("no models to save".into()))?;
    let mut epochs = BTreeMap::new();
    for (model, report) in models {
        let stem = epoch_stem(model.epoch);
        let file = format!("{stem}.f32");
        let report_file = format!("{stem}.fit.json");
        write_f32(&dir.join(&file), &model.flat_parameters())?;
        write_json(&dir.join(&report_file), report)?;
        epochs.insert(model.epoch, ModelEpochEntry { file, report: report_file });
    }
    let manifest = ModelManifest {
        version: FORMAT_VERSION,
        method: method.to_string(),
        h: first.rep_dim(),
        encoder: NetSpec::of(&first.encoder),
        decoder: NetSpec::of(&first.decoder),
        curve: first.curve,
        epochs,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn load_models(dir: &Path) -> Result<Vec<(VisualizationModel, FitReport)>> {
    let manifest_path = dir.join("manifest.json");
    let m: ModelManifest = read_json(&manifest_path)?;
    if m.version != FORMAT_VERSION {
        return Err(Error::format(&manifest_path, format!("unsupported manifest version {}", m.version)));
    }
    let split = m.encoder.parameter_count();
    let mut out = Vec::with_capacity(m.epochs.len());
    for (&epoch, entry) in &m.epochs {
        let path = dir.join(&entry.file);
        let flat = read_f32(&path)?;
        if flat.len() != split + m.decoder.parameter_count() {
            return Err(Error::format(&path, "parameter count does not match the manifest"));
        }
        let model = VisualizationModel::new(epoch, m.encoder.build(&flat[..split])?, m.decoder.build(&flat[split..])?, m.curve)?;
        let report: FitReport = read_json(&dir.join(&entry.report))?;
        out.push((model, report));
    }
    Ok(out)
}

/// Appends a line to the run log.
pub fn log_line(run_dir: &Path, line: &str) -> Result<()> {
    let path = run_dir.join("run.log");
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}
