//! Pipeline stages over a run directory.
//!
//! Each stage reads the artifacts of earlier stages from disk, writes its own, and
//! finishes by touching `stages/<name>.done`. A stage whose marker exists is skipped
//! unless forced; rerunning a stage clears the markers of every later stage.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tracevis_core::boundary::BoundarySet;
use tracevis_core::landscape::{
    render_landscape, sample_records, BundleMeta, EpochBundle, Extent, Palette, BUNDLE_VERSION,
};
use tracevis_core::metrics::{spatial_metrics, temporal_metrics, MethodMetrics, MetricsReport, PcaBaseline, Projector, Snapshot};
use tracevis_core::numerics::Matrix;
use tracevis_core::subject::{train_subject, validate_sequence, BlobsSpec, Dataset, Split, SubjectCheckpoint};
use tracevis_core::complex::BavrComplex;
use tracevis_core::visualizer::{fit_epoch, prepare_epoch, synthesize_for_epoch, visualizer_seed, VisualizationModel, VisualizerConfig};

use crate::bundle_io::export_bundle;
use crate::config::{DatasetSpec, PipelineConfig};
use crate::error::{Error, Result};
use crate::idx;
use crate::store::{self, epoch_stem};

/// Fraction of the embedding span added on every side of the landscape extent.
pub const EXTENT_PAD: f32 = 0.05;
pub const PCA_METHOD: &str = "PCA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Subject,
    Synthesize,
    Fit,
    Evaluate,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Subject, Stage::Synthesize, Stage::Fit, Stage::Evaluate, Stage::Render];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Subject => "train-subject",
            Stage::Synthesize => "synthesize",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Render => "render",
        }
    }

    /// Stages that must have run before this one.
    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Subject => &[],
            Stage::Synthesize => &[Stage::Subject],
            Stage::Fit => &[Stage::Subject, Stage::Synthesize],
            Stage::Evaluate => &[Stage::Subject, Stage::Synthesize, Stage::Fit],
            Stage::Render => &[Stage::Subject, Stage::Synthesize, Stage::Fit],
        }
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn subject_dir(&self) -> PathBuf {
        self.root.join("subject")
    }
    pub fn subject_manifest(&self) -> PathBuf {
        self.subject_dir().join("manifest.json")
    }
    pub fn boundary_dir(&self) -> PathBuf {
        self.root.join("boundary")
    }
    pub fn complex_file(&self, with_boundary: bool, epoch: usize) -> PathBuf {
        let kind = if with_boundary { "bavr" } else { "knn" };
        self.root.join("complex").join(kind).join(format!("{}.jsonl", epoch_stem(epoch)))
    }
    pub fn model_dir(&self, method: &str) -> PathBuf {
        self.root.join("visualizer").join(method)
    }
    pub fn metrics_json(&self) -> PathBuf {
        self.root.join("metrics.json")
    }
    pub fn metrics_table(&self) -> PathBuf {
        self.root.join("metrics.txt")
    }
    pub fn bundles_dir(&self) -> PathBuf {
        self.root.join("bundles")
    }
    pub fn bundle_dir(&self, epoch: usize) -> PathBuf {
        self.bundles_dir().join(epoch_stem(epoch))
    }
    fn marker(&self, stage: Stage) -> PathBuf {
        self.root.join("stages").join(format!("{}.done", stage.name()))
    }
    pub fn is_done(&self, stage: Stage) -> bool {
        self.marker(stage).is_file()
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: RunLayout,
    pub force: bool,
    pub quiet: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let layout = RunLayout::new(config.output_dir.clone());
        Pipeline { config, layout, force: false, quiet: false }
    }

    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    fn log(&self, line: &str) -> Result<()> {
        if !self.quiet {
            eprintln!("{line}");
        }
        store::log_line(&self.layout.root, line)
    }

    /// Writes the config snapshot, refusing to mix artifacts from a different config.
    fn prepare_run_dir(&self) -> Result<()> {
        let snapshot = self.layout.config();
        let text = format!("{}\n", self.config.to_json());
        if snapshot.is_file() && !self.force {
            let existing = fs::read_to_string(&snapshot).map_err(|e| Error::io(&snapshot, e))?;
            if existing != text {
                return Err(Error::Config(format!(
                    "{} holds a run with a different configuration; pass --force to overwrite it",
                    self.layout.root.display()
                )));
            }
            return Ok(());
        }
        store::write_atomic(&snapshot, text.as_bytes())
    }

    /// Runs `target` and any missing prerequisites. The target always runs; prerequisites
    /// run only when their marker is absent or `force` is set.
    pub fn run_stage(&self, target: Stage) -> Result<()> {
        self.prepare_run_dir()?;
        for &stage in target.requires() {
            if self.force || !self.layout.is_done(stage) {
                self.execute(stage)?;
            }
        }
        self.execute(target)
    }

    /// Full pipeline, skipping completed stages unless forced.
    pub fn run_all(&self) -> Result<()> {
        self.prepare_run_dir()?;
        for stage in Stage::ALL {
            if self.force || !self.layout.is_done(stage) {
                self.execute(stage)?;
            } else {
                self.log(&format!("[{}] already complete, skipping", stage.name()))?;
            }
        }
        Ok(())
    }

    /// `fit` as exposed on the command line: models, then bundles.
    pub fn run_fit(&self) -> Result<()> {
        self.run_stage(Stage::Fit)?;
        self.execute(Stage::Render)
    }

    fn execute(&self, stage: Stage) -> Result<()> {
        for later in Stage::ALL.into_iter().filter(|&s| s > stage) {
            let m = self.layout.marker(later);
            if m.exists() {
                fs::remove_file(&m).map_err(|e| Error::io(&m, e))?;
            }
        }
        self.log(&format!("[{}] start", stage.name()))?;
        let started = Instant::now();
        let result = match stage {
            Stage::Subject => self.stage_subject(),
            Stage::Synthesize => self.stage_synthesize(),
            Stage::Fit => self.stage_fit(),
            Stage::Evaluate => self.stage_evaluate(),
            Stage::Render => self.stage_render(),
        };
        if let Err(e) = result {
            let _ = self.log(&format!("[{}] failed: {e}", stage.name()));
            return Err(Error::Stage { stage: stage.name(), source: Box::new(e) });
        }
        self.log(&format!("[{}] done in {:.1}s", stage.name(), started.elapsed().as_secs_f64()))?;
        store::write_atomic(&self.layout.marker(stage), b"")
    }

    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        load_datasets(&self.config)
    }

    pub fn checkpoints(&self) -> Result<Vec<SubjectCheckpoint>> {
        store::load_checkpoints(&self.layout.subject_manifest())
    }

    pub fn boundary(&self, epoch: usize) -> Result<BoundarySet> {
        store::load_boundary(&self.layout.boundary_dir(), epoch)
    }

    pub fn models(&self, method: &str) -> Result<Vec<VisualizationModel>> {
        Ok(store::load_models(&self.layout.model_dir(method))?.into_iter().map(|(m, _)| m).collect())
    }

    /// Name of the method whose landscapes are rendered.
    pub fn primary_method(&self) -> String {
        self.config.methods().remove(0).0
    }

    fn stage_subject(&self) -> Result<()> {
        let (train, _) = self.datasets()?;
        let checkpoints = match &self.config.subject.dump {
            Some(manifest) => store::load_checkpoints(manifest)?,
            None => train_subject(&train, &self.config.subject_train_config())?,
        };
        validate_sequence(&checkpoints)?;
        let first = &checkpoints[0];
        if first.input_dim() != train.dim() || first.class_count() != train.class_count() {
            return Err(Error::Config(format!(
                "checkpoints expect d={} and C={}, dataset has d={} and C={}",
                first.input_dim(),
                first.class_count(),
                train.dim(),
                train.class_count()
            )));
        }
        store::save_checkpoints(&self.layout.subject_dir(), &checkpoints)?;
        for c in &checkpoints {
            if let Some(acc) = c.train_accuracy {
                self.log(&format!("  checkpoint {}: train accuracy {acc:.4}", c.epoch))?;
            }
        }
        Ok(())
    }

    fn stage_synthesize(&self) -> Result<()> {
        let (train, _) = self.datasets()?;
        for ckpt in self.checkpoints()? {
            let set = synthesize_for_epoch(&ckpt, &train, &self.config.boundary, self.config.seed)?;
            self.log(&format!("  checkpoint {}: {} boundary points", ckpt.epoch, set.points.rows()))?;
            store::save_boundary(&self.layout.boundary_dir(), ckpt.epoch, &set)?;
        }
        Ok(())
    }

    fn stage_fit(&self) -> Result<()> {
        let (train, _) = self.datasets()?;
        let checkpoints = self.checkpoints()?;
        for (method, vcfg) in self.config.methods() {
            let models = self.fit_method(&train, &checkpoints, &vcfg)?;
            for (m, r) in &models {
                self.log(&format!("  {method} checkpoint {}: final loss {:.4}", m.epoch, r.final_loss.total))?;
            }
            store::save_models(&self.layout.model_dir(&method), &method, &models)?;
        }
        Ok(())
    }

    fn fit_method(
        &self,
        train: &Dataset,
        checkpoints: &[SubjectCheckpoint],
        vcfg: &VisualizerConfig,
    ) -> Result<Vec<(VisualizationModel, tracevis_core::visualizer::FitReport)>> {
        let with_boundary = !vcfg.ablation.no_boundary;
        let mut out: Vec<(VisualizationModel, _)> = Vec::with_capacity(checkpoints.len());
        let mut prev_reps: Option<Matrix> = None;
        for ckpt in checkpoints {
            let reps = ckpt.features(train.inputs())?;
            let boundary = if with_boundary { Some(self.boundary(ckpt.epoch)?.points) } else { None };
            let data = prepare_epoch(ckpt, &reps, boundary.as_ref(), prev_reps.as_ref(), self.config.complex.k, vcfg)?;
            save_complex_once(&self.layout.complex_file(with_boundary, ckpt.epoch), &data.complex, self.config.complex.metric)?;
            let prev_model = out.last().map(|(m, _)| m);
            let fitted = fit_epoch(&data, prev_model, vcfg, visualizer_seed(self.config.seed, ckpt.epoch))?;
            out.push(fitted);
            prev_reps = Some(reps);
        }
        Ok(out)
    }

    fn stage_evaluate(&self) -> Result<()> {
        let report = self.evaluate()?;
        store::write_json(&self.layout.metrics_json(), &report)?;
        store::write_atomic(&self.layout.metrics_table(), report.render_table().as_bytes())?;
        if !self.quiet {
            eprint!("{}", report.render_table());
        }
        Ok(())
    }

    /// Metrics of every fitted method, plus the PCA baseline when enabled.
    pub fn evaluate(&self) -> Result<MetricsReport> {
        let (train, test) = self.datasets()?;
        let checkpoints = self.checkpoints()?;
        let ks = self.config.evaluation.ks.clone();
        let mut boundaries = Vec::with_capacity(checkpoints.len());
        let mut reps = Vec::with_capacity(checkpoints.len());
        for c in &checkpoints {
            boundaries.push(self.boundary(c.epoch)?.points);
            reps.push([c.features(train.inputs())?, c.features(test.inputs())?]);
        }
        let mut methods = Vec::new();
        if self.config.evaluation.pca {
            let pcas = reps.iter().map(|r| PcaBaseline::fit(&r[0])).collect::<Result<Vec<_>, _>>()?;
            let projectors: Vec<&dyn Projector> = pcas.iter().map(|p| p as &dyn Projector).collect();
            methods.push(evaluate_method(PCA_METHOD, &projectors, &checkpoints, &reps, &boundaries, &ks)?);
        }
        for (method, _) in self.config.methods() {
            let models = self.models(&method)?;
            if models.len() != checkpoints.len() || models.iter().zip(&checkpoints).any(|(m, c)| m.epoch != c.epoch) {
                return Err(Error::format(&self.layout.model_dir(&method), "models do not match the checkpoint epochs"));
            }
            let projectors: Vec<&dyn Projector> = models.iter().map(|m| m as &dyn Projector).collect();
            methods.push(evaluate_method(&method, &projectors, &checkpoints, &reps, &boundaries, &ks)?);
        }
        Ok(MetricsReport { ks, methods })
    }

    fn stage_render(&self) -> Result<()> {
        let method = self.primary_method();
        let metrics: Option<MetricsReport> = if self.layout.metrics_json().is_file() && self.layout.is_done(Stage::Evaluate) {
            Some(store::read_json(&self.layout.metrics_json())?)
        } else {
            None
        };
        for bundle in self.build_bundles(&method, metrics.as_ref())? {
            let dir = self.layout.bundle_dir(bundle.meta.epoch);
            export_bundle(&bundle, &dir)?;
            self.log(&format!(
                "  epoch {}: {} boundary pixels of {}",
                bundle.meta.epoch,
                bundle.raster.boundary_count(),
                bundle.raster.width * bundle.raster.height
            ))?;
        }
        Ok(())
    }

    /// One bundle per checkpoint for `method`, carrying that epoch's slice of `metrics`.
    pub fn build_bundles(&self, method: &str, metrics: Option<&MetricsReport>) -> Result<Vec<EpochBundle>> {
        let (train, test) = self.datasets()?;
        let checkpoints = self.checkpoints()?;
        let models = self.models(method)?;
        let classes = train.class_count();
        let palette = self.config.render.palette.clone().unwrap_or_else(|| Palette::distinct(classes));
        palette.validate(classes)?;
        let method_metrics = metrics.and_then(|m| m.method(method));
        let mut out = Vec::with_capacity(checkpoints.len());
        for (ckpt, model) in checkpoints.iter().zip(&models) {
            if ckpt.epoch != model.epoch {
                return Err(Error::format(&self.layout.model_dir(method), "models do not match the checkpoint epochs"));
            }
            let train_reps = ckpt.features(train.inputs())?;
            let test_reps = ckpt.features(test.inputs())?;
            let (train_emb, mut records) =
                sample_records(model, ckpt, &train_reps, train.labels(), train.ids(), Split::Train)?;
            let (_, test_records) = sample_records(model, ckpt, &test_reps, test.labels(), test.ids(), Split::Test)?;
            records.extend(test_records);
            let extent = Extent::around(&train_emb, EXTENT_PAD)?;
            let r = &self.config.render;
            let delta = self.config.render_delta();
            let raster = render_landscape(model, ckpt, extent, r.width, r.height, delta, r.shading)?;
            let (epoch_metrics, temporal) = match method_metrics {
                Some(m) => (
                    m.epochs.iter().filter(|e| e.epoch == ckpt.epoch).cloned().collect(),
                    m.temporal.iter().filter(|t| t.to_epoch == ckpt.epoch).cloned().collect(),
                ),
                None => (Vec::new(), Vec::new()),
            };
            let meta = BundleMeta {
                version: BUNDLE_VERSION,
                epoch: ckpt.epoch,
                method: method.to_string(),
                class_count: classes,
                width: r.width,
                height: r.height,
                extent,
                delta,
                shading: r.shading,
                palette: palette.clone(),
                embeddings: records,
                metrics: epoch_metrics,
                temporal,
            };
            out.push(EpochBundle { meta, raster });
        }
        Ok(out)
    }
}

/// Complexes are shared by methods with the same boundary setting; write each once per run.
fn save_complex_once(path: &Path, complex: &BavrComplex, metric: crate::config::Metric) -> Result<()> {
    let bytes = store::encode_complex(complex, metric);
    if fs::read(path).is_ok_and(|existing| existing == bytes) {
        return Ok(());
    }
    store::write_atomic(path, &bytes)
}

fn evaluate_method(
    name: &str,
    projectors: &[&dyn Projector],
    checkpoints: &[SubjectCheckpoint],
    reps: &[[Matrix; 2]],
    boundaries: &[Matrix],
    ks: &[usize],
) -> Result<MethodMetrics> {
    let mut epochs = Vec::new();
    let mut temporal = Vec::new();
    for (si, split) in [Split::Train, Split::Test].into_iter().enumerate() {
        let mut embeddings = Vec::with_capacity(checkpoints.len());
        for (t, ckpt) in checkpoints.iter().enumerate() {
            let r = &reps[t][si];
            epochs.push(spatial_metrics(projectors[t], ckpt, r, Some(&boundaries[t]), ks, ckpt.epoch, split)?);
            embeddings.push(projectors[t].project(r)?);
        }
        for t in 1..checkpoints.len() {
            let prev = Snapshot { epoch: checkpoints[t - 1].epoch, reps: &reps[t - 1][si], embedding: &embeddings[t - 1] };
            let curr = Snapshot { epoch: checkpoints[t].epoch, reps: &reps[t][si], embedding: &embeddings[t] };
            temporal.push(temporal_metrics(prev, curr, ks, split)?);
        }
    }
    epochs.sort_by_key(|e| (e.epoch, e.split == Split::Test));
    Ok(MethodMetrics { method: name.to_string(), epochs, temporal })
}

/// Train and test splits described by the config.
pub fn load_datasets(config: &PipelineConfig) -> Result<(Dataset, Dataset)> {
    match &config.dataset {
        DatasetSpec::Blobs { dim, classes, train_count, test_count, separation } => {
            let spec = BlobsSpec {
                dim: *dim,
                classes: *classes,
                train_count: *train_count,
                test_count: *test_count,
                separation: *separation,
                seed: config.seed,
            };
            Ok(spec.generate()?)
        }
        DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, train_limit, test_limit, classes } => {
            let train = idx_split(train_images, train_labels, *train_limit, *classes, 0, Split::Train)?;
            let test = idx_split(test_images, test_labels, *test_limit, *classes, train.len() as u64, Split::Test)?;
            if train.dim() != test.dim() {
                return Err(Error::Config("train and test images differ in size".into()));
            }
            Ok((train, test))
        }
    }
}

fn idx_split(images: &Path, labels: &Path, limit: Option<usize>, classes: usize, first_id: u64, split: Split) -> Result<Dataset> {
    let img = idx::read_images(images, limit)?;
    let lab = idx::read_labels(labels, limit)?;
    if lab.len() != img.count {
        return Err(Error::format(labels, format!("{} labels for {} images", lab.len(), img.count)));
    }
    if let Some(&bad) = lab.iter().find(|&&l| l >= classes) {
        return Err(Error::format(labels, format!("label {bad} outside 0..{classes}")));
    }
    let ids = (0..img.count as u64).map(|i| first_id + i).collect();
    let inputs = Matrix::from_vec(img.count, img.rows * img.cols, img.pixels)?;
    Ok(Dataset::new(inputs, lab, ids, classes, split)?)
}
