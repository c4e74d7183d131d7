//! Versioned JSON pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracevis_core::boundary::BoundaryConfig;
use tracevis_core::landscape::{Palette, Shading};
use tracevis_core::numerics::StepSchedule;
use tracevis_core::subject::{BlobsSpec, SubjectTrainConfig};
use tracevis_core::visualizer::{AblationFlags, CurveParams, LossWeights, Variant, VisualizerConfig};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    /// Run directory; relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub subject: SubjectParams,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub complex: ComplexParams,
    #[serde(default)]
    pub visualizer: VisualizerParams,
    #[serde(default)]
    pub evaluation: EvaluationParams,
    #[serde(default)]
    pub render: RenderParams,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        #[serde(default = "blobs_dim")]
        dim: usize,
        #[serde(default = "blobs_classes")]
        classes: usize,
        #[serde(default = "blobs_train")]
        train_count: usize,
        #[serde(default = "blobs_test")]
        test_count: usize,
        #[serde(default = "blobs_separation")]
        separation: f32,
    },
    /// MNIST-style IDX files; the first `train_limit` / `test_limit` samples are used.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
        #[serde(default = "idx_classes")]
        classes: usize,
    },
}

fn blobs_dim() -> usize {
    BlobsSpec::default().dim
}
fn blobs_classes() -> usize {
    BlobsSpec::default().classes
}
fn blobs_train() -> usize {
    BlobsSpec::default().train_count
}
fn blobs_test() -> usize {
    BlobsSpec::default().test_count
}
fn blobs_separation() -> f32 {
    BlobsSpec::default().separation
}
fn idx_classes() -> usize {
    10
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Blobs {
            dim: blobs_dim(),
            classes: blobs_classes(),
            train_count: blobs_train(),
            test_count: blobs_test(),
            separation: blobs_separation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubjectParams {
    /// Number of checkpoints T.
    pub epochs: usize,
    pub hidden: Vec<usize>,
    /// Representation width h.
    pub rep_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    /// Ingest checkpoints from this manifest instead of training.
    pub dump: Option<PathBuf>,
}

impl Default for SubjectParams {
    fn default() -> Self {
        let d = SubjectTrainConfig::default();
        SubjectParams {
            epochs: d.epochs,
            hidden: d.hidden,
            rep_dim: d.rep_dim,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            dump: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexParams {
    pub k: usize,
    pub negative_rate: usize,
    pub metric: Metric,
}

impl Default for ComplexParams {
    fn default() -> Self {
        ComplexParams { k: 15, negative_rate: 5, metric: Metric::Euclidean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualizerParams {
    pub weights: LossWeights,
    pub curve: CurveParams,
    pub schedule: StepSchedule,
    pub momentum: f32,
    pub clip_norm: Option<f32>,
    pub epochs: usize,
    pub batch_size: usize,
    pub reconstruct_boundary: bool,
    pub ablation: AblationFlags,
}

impl Default for VisualizerParams {
    fn default() -> Self {
        let d = VisualizerConfig::default();
        VisualizerParams {
            weights: d.weights,
            curve: d.curve,
            schedule: d.schedule,
            momentum: d.momentum,
            clip_norm: d.clip_norm,
            epochs: d.epochs,
            batch_size: d.batch_size,
            reconstruct_boundary: d.reconstruct_boundary,
            ablation: d.ablation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationParams {
    pub ks: Vec<usize>,
    /// Additional variants trained for the temporal comparison; the configured model is always trained.
    pub variants: Vec<Variant>,
    pub pca: bool,
}

impl Default for EvaluationParams {
    fn default() -> Self {
        EvaluationParams { ks: vec![10, 15, 20], variants: Variant::ALL.to_vec(), pca: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderParams {
    pub width: usize,
    pub height: usize,
    /// Boundary band threshold; defaults to the synthesis δ.
    pub delta: Option<f32>,
    pub shading: Shading,
    pub palette: Option<Palette>,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { width: 300, height: 300, delta: None, shading: Shading::Softmax, palette: None }
    }
}

impl PipelineConfig {
    /// Defaults everywhere, writing to `output_dir`.
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            output_dir: output_dir.into(),
            seed: default_seed(),
            dataset: DatasetSpec::default(),
            subject: SubjectParams::default(),
            boundary: BoundaryConfig::default(),
            complex: ComplexParams::default(),
            visualizer: VisualizerParams::default(),
            evaluation: EvaluationParams::default(),
            render: RenderParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = self.subject.dump.as_mut() {
            fix(d);
        }
        if let DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, .. } = &mut self.dataset {
            for p in [train_images, train_labels, test_images, test_labels] {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.subject.dump.is_none() && self.subject.epochs < 2 {
            return bad("subject.epochs must be at least 2");
        }
        if self.complex.k == 0 || self.evaluation.ks.contains(&0) {
            return bad("neighbor counts must be positive");
        }
        if self.complex.negative_rate == 0 {
            return bad("complex.negative_rate must be at least 1");
        }
        if self.visualizer.batch_size == 0 {
            return bad("visualizer.batch_size must be positive");
        }
        if self.render.width < 50 || self.render.height < 50 {
            return bad("render resolution must be at least 50x50");
        }
        if !(0.0..1.0).contains(&self.boundary.delta) {
            return bad("boundary.delta must lie in [0, 1)");
        }
        Ok(())
    }

    /// The visualizer settings of the configured model.
    pub fn visualizer_config(&self) -> VisualizerConfig {
        let v = &self.visualizer;
        VisualizerConfig {
            weights: v.weights,
            curve: v.curve,
            schedule: v.schedule,
            momentum: v.momentum,
            clip_norm: v.clip_norm,
            epochs: v.epochs,
            batch_size: v.batch_size,
            negative_rate: self.complex.negative_rate,
            reconstruct_boundary: v.reconstruct_boundary,
            ablation: v.ablation,
        }
    }

    /// Methods to train: the configured model under its own name, then any extra variants.
    pub fn methods(&self) -> Vec<(String, VisualizerConfig)> {
        let base = self.visualizer_config();
        let primary = Variant::ALL.into_iter().find(|v| v.flags() == base.ablation);
        let primary_name = primary.map(|v| v.name().to_string()).unwrap_or_else(|| "custom".to_string());
        let mut out = vec![(primary_name.clone(), base.clone())];
        for v in &self.evaluation.variants {
            if v.name() != primary_name && !out.iter().any(|(n, _)| n == v.name()) {
                out.push((v.name().to_string(), base.for_variant(*v)));
            }
        }
        out
    }

    pub fn subject_train_config(&self) -> SubjectTrainConfig {
        let s = &self.subject;
        SubjectTrainConfig {
            epochs: s.epochs,
            hidden: s.hidden.clone(),
            rep_dim: s.rep_dim,
            batch_size: s.batch_size,
            learning_rate: s.learning_rate,
            momentum: s.momentum,
            seed: tracevis_core::seed::derive_seed(self.seed, tracevis_core::seed::stream::SUBJECT, 0),
        }
    }

    pub fn render_delta(&self) -> f32 {
        self.render.delta.unwrap_or(self.boundary.delta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
