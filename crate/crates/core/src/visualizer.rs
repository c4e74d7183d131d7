//! Per-checkpoint projection autoencoders trained on the boundary-augmented complex.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{synthesize_boundary_set, BoundaryConfig, BoundarySet};
use crate::complex::{build_bavr_complex, sample_pair_batches, BavrComplex, PairBatch};
use crate::error::{precondition, Error, Result};
use crate::metrics::{eval_sem, Projector};
use crate::numerics::{top2, Matrix, MlpGrads, MlpParams, Sgd, StepSchedule, Tape};
use crate::seed::{derive_seed, stream};
use crate::subject::{Dataset, SubjectCheckpoint};

/// Hidden layers of width `h/2` between input and output of both networks.
pub const HIDDEN_LAYERS: usize = 4;

/// Low-dimensional similarity curve `q = 1 / (1 + a·d^{2b})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveParams {
    pub a: f32,
    pub b: f32,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams { a: 1.93, b: 0.79 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub projection: f32,
    pub reconstruction: f32,
    pub temporal: f32,
    /// Exponent applied to `1 + grad` in the reconstruction weights.
    pub beta: f32,
    /// Neighbor count for the neighborhood-stability weights of the temporal term.
    pub k: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { projection: 1.0, reconstruction: 1.0, temporal: 0.3, beta: 1.0, k: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub no_temporal: bool,
    pub no_boundary: bool,
    pub no_reconstruction: bool,
}

/// The three trained variants compared in the temporal evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// All loss terms with boundary edges and transfer initialization.
    #[serde(rename = "DVI")]
    Full,
    /// Transfer initialization without the temporal term.
    #[serde(rename = "DVI-T")]
    NoTemporal,
    /// Projection loss only, data edges only, transfer initialization.
    #[serde(rename = "UMAP-T")]
    UmapTransfer,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoTemporal, Variant::UmapTransfer];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "DVI",
            Variant::NoTemporal => "DVI-T",
            Variant::UmapTransfer => "UMAP-T",
        }
    }

    pub fn flags(self) -> AblationFlags {
        match self {
            Variant::Full => AblationFlags::default(),
            Variant::NoTemporal => AblationFlags { no_temporal: true, ..Default::default() },
            Variant::UmapTransfer => AblationFlags { no_temporal: true, no_boundary: true, no_reconstruction: true },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualizerConfig {
    pub weights: LossWeights,
    pub curve: CurveParams,
    pub schedule: StepSchedule,
    pub momentum: f32,
    /// Cap on the global norm of the projection and reconstruction gradients of one step,
    /// applied before the temporal gradient is added. `None` disables clipping.
    pub clip_norm: Option<f32>,
    /// Optimizer epochs per checkpoint.
    pub epochs: usize,
    /// Positive edges per step; negatives come on top.
    pub batch_size: usize,
    pub negative_rate: usize,
    /// Include boundary rows in the reconstruction loss.
    pub reconstruct_boundary: bool,
    pub ablation: AblationFlags,
}

impl Default for VisualizerConfig {
    fn default() -> Self {
        VisualizerConfig {
            weights: LossWeights::default(),
            curve: CurveParams::default(),
            schedule: StepSchedule::default(),
            momentum: 0.9,
            clip_norm: Some(5.0),
            epochs: 40,
            batch_size: 256,
            negative_rate: 5,
            reconstruct_boundary: true,
            ablation: AblationFlags::default(),
        }
    }
}

impl VisualizerConfig {
    pub fn for_variant(&self, variant: Variant) -> Self {
        VisualizerConfig { ablation: variant.flags(), ..self.clone() }
    }

    /// Loss weights after the ablation flags are applied.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.ablation.no_temporal {
            w.temporal = 0.0;
        }
        if self.ablation.no_reconstruction {
            w.reconstruction = 0.0;
        }
        w
    }
}

/// Encoder `ℝ^h → ℝ²` and decoder `ℝ² → ℝ^h` for one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualizationModel {
    pub epoch: usize,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub curve: CurveParams,
}

pub fn encoder_sizes(h: usize) -> Vec<usize> {
    let hidden = (h / 2).max(2);
    let mut sizes = alloc::vec![h];
    sizes.extend(core::iter::repeat_n(hidden, HIDDEN_LAYERS));
    sizes.push(2);
    sizes
}

pub fn decoder_sizes(h: usize) -> Vec<usize> {
    let mut sizes = encoder_sizes(h);
    sizes.reverse();
    sizes
}

impl VisualizationModel {
    pub fn new(epoch: usize, encoder: MlpParams, decoder: MlpParams, curve: CurveParams) -> Result<Self> {
        if encoder.out_dim() != 2 || decoder.in_dim() != 2 {
            return Err(precondition("encoder must map to the plane and decoder must map from it"));
        }
        if encoder.in_dim() != decoder.out_dim() {
            return Err(Error::Dimension {
                op: "visualization model",
                expected: (2, encoder.in_dim()),
                found: (2, decoder.out_dim()),
            });
        }
        Ok(VisualizationModel { epoch, encoder, decoder, curve })
    }

    pub fn random(epoch: usize, h: usize, curve: CurveParams, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = encoder_sizes(h);
        let dec = decoder_sizes(h);
        let encoder = MlpParams::random(&enc, &MlpParams::relu_activations(enc.len() - 1), &mut rng)?;
        let decoder = MlpParams::random(&dec, &MlpParams::relu_activations(dec.len() - 1), &mut rng)?;
        VisualizationModel::new(epoch, encoder, decoder, curve)
    }

    pub fn rep_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn project(&self, reps: &Matrix) -> Result<Matrix> {
        self.encoder.forward(reps)
    }

    pub fn inverse_project(&self, points: &Matrix) -> Result<Matrix> {
        self.decoder.forward(points)
    }

    /// All encoder then decoder parameters as one vector.
    pub fn flat_parameters(&self) -> Vec<f32> {
        let mut v = self.encoder.to_flat();
        v.extend(self.decoder.to_flat());
        v
    }
}

impl Projector for VisualizationModel {
    fn project(&self, reps: &Matrix) -> Result<Matrix> {
        VisualizationModel::project(self, reps)
    }

    fn reconstruct(&self, points: &Matrix) -> Result<Matrix> {
        self.inverse_project(points)
    }
}

/// `|∂g_top1/∂x| + |∂g_top2/∂x|` per row, with top classes taken at `x` itself.
pub fn head_gradient_weights(ckpt: &SubjectCheckpoint, reps: &Matrix) -> Result<Matrix> {
    if reps.cols() != ckpt.rep_dim() {
        return Err(Error::Dimension { op: "head gradient", expected: (reps.rows(), ckpt.rep_dim()), found: reps.shape() });
    }
    let logits = ckpt.logits(reps)?;
    let (first, second): (Vec<usize>, Vec<usize>) =
        logits.iter_rows().map(|r| top2(r).expect("head has at least two outputs")).unzip();
    let mut out = Matrix::zeros(reps.rows(), reps.cols());
    for cols in [first, second] {
        let mut tape = Tape::new();
        let x = tape.leaf(reps.clone());
        let head = ckpt.head.record(&mut tape, x)?;
        let picked = tape.select_per_row(head.output, cols)?;
        let total = tape.sum(picked);
        let g = tape.backward(total)?.get(x);
        for (o, v) in out.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *o += v.abs();
        }
    }
    Ok(out)
}

/// `(1 + grad)^β` elementwise.
pub fn reconstruction_weights(grad: &Matrix, beta: f32) -> Matrix {
    grad.map(|g| libm::powf(1.0 + g, beta))
}

/// Everything one checkpoint's fit needs, prepared from the checkpoint and its data.
#[derive(Debug, Clone)]
pub struct EpochData {
    pub epoch: usize,
    /// Data rows first, then boundary rows, matching the complex's vertex ids.
    pub reps: Matrix,
    pub data_count: usize,
    pub complex: BavrComplex,
    /// Per-entry reconstruction weights, row-aligned with `reps`.
    pub rec_weights: Matrix,
    /// Mean neighborhood stability against the previous checkpoint, if any.
    pub mean_sem: Option<f32>,
}

/// Builds the complex, reconstruction weights and temporal weight for one checkpoint.
///
/// `boundary` is ignored when the config disables boundary edges.
pub fn prepare_epoch(
    ckpt: &SubjectCheckpoint,
    data_reps: &Matrix,
    boundary: Option<&Matrix>,
    prev_reps: Option<&Matrix>,
    complex_k: usize,
    config: &VisualizerConfig,
) -> Result<EpochData> {
    let boundary = if config.ablation.no_boundary { None } else { boundary };
    let complex = build_bavr_complex(data_reps, boundary, complex_k)?;
    let reps = match boundary {
        Some(b) => Matrix::vstack(data_reps, b)?,
        None => data_reps.clone(),
    };
    let w = config.effective_weights();
    let rec_weights = reconstruction_weights(&head_gradient_weights(ckpt, &reps)?, w.beta);
    let mean_sem = match prev_reps {
        Some(prev) => {
            let sem = eval_sem(prev, data_reps, w.k)?;
            Some((sem.iter().sum::<f64>() / sem.len() as f64) as f32)
        }
        None => None,
    };
    Ok(EpochData { epoch: ckpt.epoch, reps, data_count: data_reps.rows(), complex, rec_weights, mean_sem })
}

/// Loss values from one evaluation or training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub projection: f32,
    pub reconstruction: f32,
    pub temporal: f32,
    pub total: f32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitReport {
    pub epoch: usize,
    /// Mean total loss over each optimizer epoch's steps.
    pub epoch_losses: Vec<f32>,
    /// Total loss on a fixed evaluation pass before the first update.
    pub initial_loss: LossBreakdown,
    /// Same evaluation pass after training.
    pub final_loss: LossBreakdown,
}

struct Objective<'a> {
    data: &'a EpochData,
    weights: LossWeights,
    curve: CurveParams,
    reconstruct_boundary: bool,
    clip_norm: Option<f32>,
    /// Previous parameters and the temporal coefficient `λ₃·mean(sem)`.
    anchor: Option<(VisualizationModel, f32)>,
}

struct StepGrads {
    encoder: MlpGrads,
    decoder: MlpGrads,
    loss: LossBreakdown,
}

impl Objective<'_> {
    fn batch(&self, model: &VisualizationModel, batch: &PairBatch, slot: &mut [u32]) -> Result<StepGrads> {
        let mut vertices: Vec<usize> = Vec::new();
        for p in &batch.pairs {
            for v in [p.i, p.j] {
                if slot[v] == u32::MAX {
                    slot[v] = vertices.len() as u32;
                    vertices.push(v);
                }
            }
        }
        let local: Vec<(usize, usize)> = batch.pairs.iter().map(|p| (slot[p.i] as usize, slot[p.j] as usize)).collect();
        let targets: Vec<f32> = batch.pairs.iter().map(|p| p.target).collect();
        for &v in &vertices {
            slot[v] = u32::MAX;
        }

        let mut tape = Tape::new();
        let x = tape.leaf(self.data.reps.select_rows(&vertices));
        let enc = model.encoder.record(&mut tape, x)?;
        let proj = tape.pair_cross_entropy(enc.output, local, targets, self.curve.a, self.curve.b)?;
        let mut loss = tape.scale(proj, self.weights.projection);
        let mut rec_value = 0.0;
        let mut dec_nodes = None;
        if self.weights.reconstruction > 0.0 {
            let rows: Vec<usize> = if self.reconstruct_boundary {
                (0..vertices.len()).collect()
            } else {
                (0..vertices.len()).filter(|&r| vertices[r] < self.data.data_count).collect()
            };
            if !rows.is_empty() {
                let dec = model.decoder.record(&mut tape, enc.output)?;
                let global: Vec<usize> = rows.iter().map(|&r| vertices[r]).collect();
                let (pred, target) = if rows.len() == vertices.len() {
                    (dec.output, x)
                } else {
                    (tape.gather_rows(dec.output, rows.clone())?, tape.gather_rows(x, rows)?)
                };
                let rec = tape.weighted_squared_error(pred, target, self.data.rec_weights.select_rows(&global))?;
                rec_value = tape.value(rec)[(0, 0)];
                let scaled = tape.scale(rec, self.weights.reconstruction);
                loss = tape.add(loss, scaled)?;
                dec_nodes = Some(dec);
            }
        }
        let grads = tape.backward(loss)?;
        let encoder = enc.grads(&grads)?;
        let mut decoder = match &dec_nodes {
            Some(d) => d.grads(&grads)?,
            None => model.decoder.zero_grads(),
        };
        let mut encoder = encoder;
        if let Some(clip) = self.clip_norm {
            let norm = libm::sqrt(encoder.squared_norm() + decoder.squared_norm());
            if norm > clip as f64 {
                let s = (clip as f64 / norm) as f32;
                encoder.scale(s);
                decoder.scale(s);
            }
        }
        let temporal = self.add_temporal(model, &mut encoder, &mut decoder);
        let projection = tape.value(proj)[(0, 0)];
        let total = self.weights.projection * projection + self.weights.reconstruction * rec_value + temporal;
        Ok(StepGrads {
            encoder,
            decoder,
            loss: LossBreakdown { projection, reconstruction: rec_value, temporal, total },
        })
    }

    /// Adds `2·c·(W − W_prev)` to the gradients and returns `c·‖W − W_prev‖²`.
    fn add_temporal(&self, model: &VisualizationModel, enc: &mut MlpGrads, dec: &mut MlpGrads) -> f32 {
        let Some((prev, coeff)) = &self.anchor else { return 0.0 };
        let mut sq = 0.0f64;
        for (net, prev_net, g) in [(&model.encoder, &prev.encoder, enc), (&model.decoder, &prev.decoder, dec)] {
            for (li, (l, pl)) in net.layers().iter().zip(prev_net.layers()).enumerate() {
                for ((gw, &w), &pw) in g.weights[li].as_mut_slice().iter_mut().zip(l.weights.as_slice()).zip(pl.weights.as_slice()) {
                    let d = w - pw;
                    sq += (d as f64) * (d as f64);
                    *gw += 2.0 * coeff * d;
                }
                for ((gb, &b), &pb) in g.biases[li].iter_mut().zip(&l.biases).zip(&pl.biases) {
                    let d = b - pb;
                    sq += (d as f64) * (d as f64);
                    *gb += 2.0 * coeff * d;
                }
            }
        }
        (*coeff as f64 * sq) as f32
    }

    fn evaluate(&self, model: &VisualizationModel, batches: &[PairBatch], slot: &mut [u32]) -> Result<LossBreakdown> {
        let mut acc = LossBreakdown::default();
        for b in batches {
            let l = self.batch(model, b, slot)?.loss;
            acc.projection += l.projection;
            acc.reconstruction += l.reconstruction;
            acc.temporal += l.temporal;
            acc.total += l.total;
        }
        let n = batches.len().max(1) as f32;
        Ok(LossBreakdown {
            projection: acc.projection / n,
            reconstruction: acc.reconstruction / n,
            temporal: acc.temporal / n,
            total: acc.total / n,
        })
    }
}

/// Temporal loss `c·‖W − W_prev‖²` over all encoder and decoder parameters, with its gradient.
pub fn temporal_loss(current: &VisualizationModel, previous: &VisualizationModel, coefficient: f32) -> Result<(f32, Vec<f32>)> {
    let (w, p) = (current.flat_parameters(), previous.flat_parameters());
    if current.encoder.layer_sizes() != previous.encoder.layer_sizes()
        || current.decoder.layer_sizes() != previous.decoder.layer_sizes()
    {
        return Err(Error::Dimension { op: "temporal loss", expected: (p.len(), 1), found: (w.len(), 1) });
    }
    let mut sq = 0.0f64;
    let grad = w
        .iter()
        .zip(&p)
        .map(|(&a, &b)| {
            let d = a - b;
            sq += (d as f64) * (d as f64);
            2.0 * coefficient * d
        })
        .collect();
    Ok(((coefficient as f64 * sq) as f32, grad))
}

/// Trains one checkpoint's model. With `prev`, parameters start as an exact copy of it.
pub fn fit_epoch(
    data: &EpochData,
    prev: Option<&VisualizationModel>,
    config: &VisualizerConfig,
    seed: u64,
) -> Result<(VisualizationModel, FitReport)> {
    if data.complex.edges().is_empty() {
        return Err(precondition("the complex has no edges"));
    }
    if data.complex.vertex_count() != data.reps.rows() || data.rec_weights.shape() != data.reps.shape() {
        return Err(Error::Dimension { op: "fit epoch", expected: data.reps.shape(), found: data.rec_weights.shape() });
    }
    let weights = config.effective_weights();
    let h = data.reps.cols();
    let mut model = match prev {
        Some(p) => {
            if p.rep_dim() != h {
                return Err(Error::Dimension { op: "transfer init", expected: (1, h), found: (1, p.rep_dim()) });
            }
            VisualizationModel { epoch: data.epoch, ..p.clone() }
        }
        None => VisualizationModel::random(data.epoch, h, config.curve, seed)?,
    };
    let anchor = match (prev, data.mean_sem) {
        (Some(p), Some(sem)) if weights.temporal > 0.0 => Some((p.clone(), weights.temporal * sem)),
        _ => None,
    };
    let objective = Objective {
        data,
        weights,
        curve: config.curve,
        reconstruct_boundary: config.reconstruct_boundary,
        clip_norm: config.clip_norm,
        anchor,
    };
    let mut slot = alloc::vec![u32::MAX; data.reps.rows()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let eval_batches = sample_pair_batches(&data.complex, config.negative_rate, config.batch_size, &mut rng)?;
    let initial_loss = objective.evaluate(&model, &eval_batches, &mut slot)?;

    let mut sgd = Sgd::new(config.schedule, config.momentum)?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = sample_pair_batches(&data.complex, config.negative_rate, config.batch_size, &mut rng)?;
        let mut sum = 0.0f64;
        for (bi, batch) in batches.iter().enumerate() {
            let step = objective.batch(&model, batch, &mut slot)?;
            if !step.loss.total.is_finite() {
                return Err(Error::Divergence { stage: "visualizer", epoch, batch: bi });
            }
            sum += step.loss.total as f64;
            sgd.step(&mut [&mut model.encoder, &mut model.decoder], &[&step.encoder, &step.decoder])
                .map_err(|e| match e {
                    Error::NonFiniteGradient { .. } => Error::Divergence { stage: "visualizer", epoch, batch: bi },
                    other => other,
                })?;
        }
        epoch_losses.push((sum / batches.len().max(1) as f64) as f32);
        sgd.advance_epoch();
    }
    let final_loss = objective.evaluate(&model, &eval_batches, &mut slot)?;
    Ok((model, FitReport { epoch: data.epoch, epoch_losses, initial_loss, final_loss }))
}

/// Settings for fitting a whole checkpoint sequence in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    pub boundary: BoundaryConfig,
    pub complex_k: usize,
    pub visualizer: VisualizerConfig,
    pub seed: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig { boundary: BoundaryConfig::default(), complex_k: 15, visualizer: VisualizerConfig::default(), seed: 42 }
    }
}

#[derive(Debug, Clone)]
pub struct EpochFit {
    pub model: VisualizationModel,
    pub report: FitReport,
    pub boundary: Option<BoundarySet>,
    /// Training-set representations at this checkpoint.
    pub reps: Matrix,
}

/// Synthesizes boundary points for one checkpoint with the run's derived seed.
pub fn synthesize_for_epoch(ckpt: &SubjectCheckpoint, train: &Dataset, config: &BoundaryConfig, run_seed: u64) -> Result<BoundarySet> {
    let target = config.target_count(train.len());
    synthesize_boundary_set(ckpt, train, target, config, derive_seed(run_seed, stream::BOUNDARY, ckpt.epoch as u64))
}

/// Seed used to fit the model of checkpoint `epoch`.
pub fn visualizer_seed(run_seed: u64, epoch: usize) -> u64 {
    derive_seed(run_seed, stream::VISUALIZER, epoch as u64)
}

/// Fits every checkpoint in order, each transfer-initialized from its predecessor.
pub fn fit_sequence(checkpoints: &[SubjectCheckpoint], train: &Dataset, config: &SequenceConfig) -> Result<Vec<EpochFit>> {
    if checkpoints.is_empty() {
        return Err(precondition("at least one checkpoint is required"));
    }
    let mut fits: Vec<EpochFit> = Vec::with_capacity(checkpoints.len());
    for ckpt in checkpoints {
        let reps = ckpt.features(train.inputs())?;
        let boundary = if config.visualizer.ablation.no_boundary {
            None
        } else {
            Some(synthesize_for_epoch(ckpt, train, &config.boundary, config.seed)?)
        };
        let prev = fits.last();
        let data = prepare_epoch(
            ckpt,
            &reps,
            boundary.as_ref().map(|b| &b.points),
            prev.map(|p| &p.reps),
            config.complex_k,
            &config.visualizer,
        )?;
        let (model, report) =
            fit_epoch(&data, prev.map(|p| &p.model), &config.visualizer, visualizer_seed(config.seed, ckpt.epoch))?;
        fits.push(EpochFit { model, report, boundary, reps });
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Layer};
    use alloc::vec;

    fn linear(w: Matrix) -> MlpParams {
        let n = w.cols();
        MlpParams::from_layers(vec![Layer { weights: w, biases: vec![0.0; n], activation: Activation::Identity }]).unwrap()
    }

    #[test]
    fn linear_head_gradient_is_row_extraction() {
        // g(x) = W x with classes as columns of a 3×3 weight matrix
        let w = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 3.0, -1.0], [4.0, 0.0, 2.0]]).unwrap();
        let ckpt = SubjectCheckpoint::new(1, linear(Matrix::identity(3)), linear(w.clone())).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let g = head_gradient_weights(&ckpt, &x).unwrap();
        let logits = ckpt.logits(&x).unwrap();
        for r in 0..2 {
            let (a, b) = top2(logits.row(r)).unwrap();
            for m in 0..3 {
                let want = w[(m, a)].abs() + w[(m, b)].abs();
                assert!((g[(r, m)] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_head_gives_unit_weights() {
        let ckpt = SubjectCheckpoint::new(1, linear(Matrix::identity(2)), linear(Matrix::zeros(2, 3))).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let g = head_gradient_weights(&ckpt, &x).unwrap();
        assert!(reconstruction_weights(&g, 1.0).as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn temporal_loss_examples() {
        let m = VisualizationModel::random(1, 4, CurveParams::default(), 7).unwrap();
        let (l, g) = temporal_loss(&m, &m, 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let mut moved = m.clone();
        moved.encoder.layers_mut()[0].biases[0] += 0.5;
        assert!((temporal_loss(&moved, &m, 1.0).unwrap().0 - 0.25).abs() < 1e-7);
        assert_eq!(temporal_loss(&moved, &m, 0.0).unwrap().0, 0.0);
    }

    #[test]
    fn network_shapes() {
        assert_eq!(encoder_sizes(32), vec![32, 16, 16, 16, 16, 2]);
        assert_eq!(decoder_sizes(32), vec![2, 16, 16, 16, 16, 32]);
        let m = VisualizationModel::random(1, 8, CurveParams::default(), 1).unwrap();
        let x = Matrix::filled(3, 8, 0.5);
        assert_eq!(m.inverse_project(&m.project(&x).unwrap()).unwrap().shape(), (3, 8));
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!((w.projection, w.reconstruction, w.temporal, w.beta), (1.0, 1.0, 0.3, 1.0));
        let c = VisualizerConfig::default();
        assert_eq!(c.schedule.initial, 0.01);
        assert_eq!(c.for_variant(Variant::UmapTransfer).effective_weights().reconstruction, 0.0);
        assert_eq!(c.for_variant(Variant::NoTemporal).effective_weights().temporal, 0.0);
    }
}
