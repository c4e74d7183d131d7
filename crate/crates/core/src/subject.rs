//! Subject classifiers `c = g ∘ f` checkpointed once per training epoch.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::numerics::{argmax, top2, Activation, Matrix, MlpParams, Sgd, StepSchedule, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Labelled inputs with stable per-sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    ids: Vec<u64>,
    class_count: usize,
    split: Split,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, ids: Vec<u64>, class_count: usize, split: Split) -> Result<Self> {
        if inputs.rows() == 0 || inputs.cols() == 0 {
            return Err(precondition("a dataset needs at least one sample and one input dimension"));
        }
        if labels.len() != inputs.rows() || ids.len() != inputs.rows() {
            return Err(Error::Dimension { op: "dataset", expected: (inputs.rows(), 1), found: (labels.len(), ids.len()) });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(precondition(format!("label {bad} is not below the class count {class_count}")));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(precondition("sample ids must be unique"));
        }
        Ok(Dataset { inputs, labels, ids, class_count, split })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }
}

/// Isotropic Gaussian blobs with unit variance whose centers sit on a regular
/// simplex: every pair of centers is `separation` standard deviations apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsSpec {
    pub dim: usize,
    pub classes: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub separation: f32,
    pub seed: u64,
}

impl Default for BlobsSpec {
    fn default() -> Self {
        BlobsSpec { dim: 10, classes: 3, train_count: 600, test_count: 200, separation: 5.0, seed: 42 }
    }
}

impl BlobsSpec {
    /// Generates the train and test splits. Train ids are `0..train_count`, test ids follow.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        if self.classes < 2 || self.dim < self.classes {
            return Err(precondition("blobs need at least two classes and dim >= classes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let offset = self.separation / core::f32::consts::SQRT_2;
        let mut make = |count: usize, first_id: u64, split: Split| -> Result<Dataset> {
            let mut data = Vec::with_capacity(count * self.dim);
            let mut labels = Vec::with_capacity(count);
            for i in 0..count {
                let class = i % self.classes;
                for m in 0..self.dim {
                    let noise: f32 = rng.sample(StandardNormal);
                    data.push(noise + if m == class { offset } else { 0.0 });
                }
                labels.push(class);
            }
            let ids = (0..count as u64).map(|i| first_id + i).collect();
            Dataset::new(Matrix::from_vec(count, self.dim, data)?, labels, ids, self.classes, split)
        };
        let train = make(self.train_count, 0, Split::Train)?;
        let test = make(self.test_count, self.train_count as u64, Split::Test)?;
        Ok((train, test))
    }
}

/// One epoch's classifier split into feature function `f` and prediction head `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectCheckpoint {
    pub epoch: usize,
    pub feature_net: MlpParams,
    pub head: MlpParams,
    pub train_accuracy: Option<f32>,
}

/// Logits with the two highest-scoring classes per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub logits: Matrix,
    pub top1: Vec<usize>,
    pub top2: Vec<usize>,
}

impl SubjectCheckpoint {
    pub fn new(epoch: usize, feature_net: MlpParams, head: MlpParams) -> Result<Self> {
        if feature_net.out_dim() != head.in_dim() {
            return Err(Error::Dimension {
                op: "checkpoint",
                expected: (feature_net.out_dim(), head.out_dim()),
                found: (head.in_dim(), head.out_dim()),
            });
        }
        if head.out_dim() < 2 {
            return Err(precondition("the prediction head needs at least two classes"));
        }
        Ok(SubjectCheckpoint { epoch, feature_net, head, train_accuracy: None })
    }

    pub fn input_dim(&self) -> usize {
        self.feature_net.in_dim()
    }

    pub fn rep_dim(&self) -> usize {
        self.head.in_dim()
    }

    pub fn class_count(&self) -> usize {
        self.head.out_dim()
    }

    /// `x = f(s)` row by row.
    pub fn features(&self, inputs: &Matrix) -> Result<Matrix> {
        self.feature_net.forward(inputs)
    }

    /// `g(x)` logits for representation rows.
    pub fn logits(&self, reps: &Matrix) -> Result<Matrix> {
        self.head.forward(reps)
    }

    pub fn predict(&self, reps: &Matrix) -> Result<Predictions> {
        let logits = self.logits(reps)?;
        let (top1, top2s) = logits
            .iter_rows()
            .map(|r| top2(r).expect("head has at least two outputs"))
            .unzip();
        Ok(Predictions { logits, top1, top2: top2s })
    }

    /// `argmax c(s)` for input rows.
    pub fn classify(&self, inputs: &Matrix) -> Result<Vec<usize>> {
        let logits = self.logits(&self.features(inputs)?)?;
        Ok(logits.iter_rows().map(argmax).collect())
    }

    pub fn same_shape(&self, other: &SubjectCheckpoint) -> bool {
        self.feature_net.layer_sizes() == other.feature_net.layer_sizes()
            && self.head.layer_sizes() == other.head.layer_sizes()
            && self.feature_net.activations() == other.feature_net.activations()
            && self.head.activations() == other.head.activations()
    }
}

/// Hyperparameters for the in-repo subject classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubjectTrainConfig {
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub rep_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for SubjectTrainConfig {
    fn default() -> Self {
        SubjectTrainConfig {
            epochs: 5,
            hidden: alloc::vec![64, 64],
            rep_dim: 32,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 42,
        }
    }
}

/// Builds an untrained subject `d → hidden… → rep_dim → C`. Every feature layer,
/// including the representation layer, uses ReLU; the head is a single linear layer.
pub fn init_subject<R: Rng + ?Sized>(
    input_dim: usize,
    class_count: usize,
    config: &SubjectTrainConfig,
    rng: &mut R,
) -> Result<(MlpParams, MlpParams)> {
    let mut sizes = Vec::with_capacity(config.hidden.len() + 2);
    sizes.push(input_dim);
    sizes.extend_from_slice(&config.hidden);
    sizes.push(config.rep_dim);
    let acts = alloc::vec![Activation::Relu; sizes.len() - 1];
    let feature_net = MlpParams::random(&sizes, &acts, rng)?;
    let head = MlpParams::random(&[config.rep_dim, class_count], &[Activation::Identity], rng)?;
    Ok((feature_net, head))
}

/// Trains the subject with mini-batch cross-entropy and returns one checkpoint per epoch.
pub fn train_subject(dataset: &Dataset, config: &SubjectTrainConfig) -> Result<Vec<SubjectCheckpoint>> {
    if config.epochs < 2 {
        return Err(precondition("at least two subject epochs are required for temporal analysis"));
    }
    if config.batch_size == 0 {
        return Err(precondition("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut feature_net, mut head) = init_subject(dataset.dim(), dataset.class_count(), config, &mut rng)?;
    let schedule = StepSchedule { initial: config.learning_rate, decay_every: usize::MAX, factor: 1.0 };
    let mut opt = Sgd::new(schedule, config.momentum)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut checkpoints = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let x = tape.leaf(dataset.inputs().select_rows(chunk));
            let f = feature_net.record(&mut tape, x)?;
            let g = head.record(&mut tape, f.output)?;
            let labels = chunk.iter().map(|&i| dataset.labels()[i]).collect();
            let loss = tape.softmax_cross_entropy(g.output, labels)?;
            if !tape.value(loss)[(0, 0)].is_finite() {
                return Err(Error::Divergence { stage: "subject training", epoch, batch });
            }
            let grads = tape.backward(loss)?;
            let (gf, gg) = (f.grads(&grads)?, g.grads(&grads)?);
            opt.step(&mut [&mut feature_net, &mut head], &[&gf, &gg]).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Divergence { stage: "subject training", epoch, batch },
                other => other,
            })?;
        }
        opt.advance_epoch();
        let mut ckpt = SubjectCheckpoint::new(epoch, feature_net.clone(), head.clone())?;
        let predicted = ckpt.classify(dataset.inputs())?;
        let correct = predicted.iter().zip(dataset.labels()).filter(|(p, l)| p == l).count();
        ckpt.train_accuracy = Some(correct as f32 / dataset.len() as f32);
        checkpoints.push(ckpt);
    }
    Ok(checkpoints)
}

/// Checks that a checkpoint list is a gap-free chronological sequence of identical shapes.
pub fn validate_sequence(checkpoints: &[SubjectCheckpoint]) -> Result<()> {
    let Some(first) = checkpoints.first() else {
        return Err(precondition("at least one checkpoint is required"));
    };
    for w in checkpoints.windows(2) {
        if w[1].epoch != w[0].epoch + 1 {
            return Err(precondition(format!("epoch {} is not followed by {}", w[0].epoch, w[0].epoch + 1)));
        }
        if !w[1].same_shape(first) {
            return Err(precondition(format!("checkpoint shape drifts at epoch {}", w[1].epoch)));
        }
    }
    Ok(())
}
