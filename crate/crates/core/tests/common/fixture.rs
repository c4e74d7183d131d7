//! A small trained subject on blobs, shared by the slower end-to-end tests.

use tracevis_core::boundary::BoundaryConfig;
use tracevis_core::subject::{train_subject, BlobsSpec, Dataset, SubjectCheckpoint, SubjectTrainConfig};
use tracevis_core::visualizer::{SequenceConfig, VisualizerConfig};

pub fn blobs(seed: u64) -> (Dataset, Dataset) {
    BlobsSpec { dim: 8, classes: 3, train_count: 240, test_count: 60, separation: 5.0, seed }.generate().unwrap()
}

pub fn subject(train: &Dataset, epochs: usize, seed: u64) -> Vec<SubjectCheckpoint> {
    let config = SubjectTrainConfig { epochs, hidden: vec![32], rep_dim: 16, seed, ..Default::default() };
    train_subject(train, &config).unwrap()
}

pub fn sequence_config(epochs: usize, seed: u64) -> SequenceConfig {
    SequenceConfig {
        boundary: BoundaryConfig::default(),
        complex_k: 10,
        visualizer: VisualizerConfig { epochs, batch_size: 128, ..Default::default() },
        seed,
    }
}
