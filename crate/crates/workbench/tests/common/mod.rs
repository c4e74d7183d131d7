#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tracevis::config::DatasetSpec;
use tracevis::{Pipeline, PipelineConfig};

/// A run small enough to finish in a couple of seconds.
pub fn tiny_config(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::new(out);
    c.seed = 7;
    c.dataset = DatasetSpec::Blobs { dim: 6, classes: 3, train_count: 150, test_count: 45, separation: 5.0 };
    c.subject.epochs = 3;
    c.subject.hidden = vec![24];
    c.subject.rep_dim = 12;
    c.complex.k = 10;
    c.visualizer.epochs = 3;
    c.visualizer.batch_size = 128;
    c.evaluation.ks = vec![10];
    c.render.width = 60;
    c.render.height = 50;
    c
}

pub fn tiny_run(out: &Path) -> PathBuf {
    let config = tiny_config(out);
    Pipeline::new(config).quiet(true).run_all().unwrap();
    out.to_path_buf()
}

pub fn write_config(path: &Path, config: &PipelineConfig) {
    std::fs::write(path, config.to_json()).unwrap();
}
