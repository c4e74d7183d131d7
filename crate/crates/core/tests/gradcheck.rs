//! Autodiff gradients of the three visualizer losses against central finite
//! differences of separate f64 implementations.

mod common;

use common::gradients::{projection_gradient_error, reconstruction_gradient_error, temporal_gradient_error};
use tracevis_core::numerics::{Matrix, Tape};

const MAX_REL: f64 = 1e-4;

#[test]
fn projection_loss_gradient() {
    let e = projection_gradient_error();
    assert!(e < MAX_REL, "relative error {e:e}");
}

#[test]
fn reconstruction_loss_gradient() {
    let e = reconstruction_gradient_error();
    assert!(e < MAX_REL, "relative error {e:e}");
}

#[test]
fn temporal_loss_gradient() {
    let e = temporal_gradient_error();
    assert!(e < MAX_REL, "relative error {e:e}");
}

#[test]
fn hand_evaluated_losses() {
    // a = b = 1, squared distance 1, p = 1: q = 1/2 so the loss is ln 2
    let mut tape = Tape::new();
    let y = tape.leaf(Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap());
    let l = tape.pair_cross_entropy(y, vec![(0, 1)], vec![1.0], 1.0, 1.0).unwrap();
    assert!((tape.value(l)[(0, 0)] as f64 - 2f64.ln()).abs() < 1e-6);

    // x = (1, 0), reconstruction (0, 0), weights (1 + 1, 1 + 3) with β = 1
    let mut tape = Tape::new();
    let x = tape.leaf(Matrix::from_rows(&[[1.0, 0.0]]).unwrap());
    let r = tape.leaf(Matrix::zeros(1, 2));
    let l = tape.weighted_squared_error(r, x, Matrix::from_rows(&[[2.0, 4.0]]).unwrap()).unwrap();
    assert_eq!(tape.value(l)[(0, 0)], 1.0);
}
