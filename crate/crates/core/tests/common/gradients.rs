//! Finite-difference checks of the visualizer losses against the tape's gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracevis_core::numerics::{Matrix, MlpParams, Tape};
use tracevis_core::visualizer::{temporal_loss, CurveParams, VisualizationModel};

use super::{central_diff, forward64, pair_bce, relative_error};

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, h: usize) -> Matrix {
    let data: Vec<f32> = (0..n * h).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(n, h, data).unwrap()
}

pub fn to64(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

pub fn flat64(net: &MlpParams) -> Vec<f64> {
    net.to_flat().iter().map(|&v| v as f64).collect()
}

/// Every network used here is well under the 1e4 parameter budget.
///
/// Biases start at zero after initialization, which puts rows whose inputs are all
/// zero exactly on a ReLU kink where central differences are meaningless; random
/// biases move them off it.
pub fn model(h: usize, seed: u64) -> VisualizationModel {
    let mut m = VisualizationModel::random(1, h, CurveParams::default(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for net in [&mut m.encoder, &mut m.decoder] {
        for layer in net.layers_mut() {
            for b in &mut layer.biases {
                *b = rng.random_range(-0.3..0.3);
            }
        }
    }
    assert!(m.flat_parameters().len() <= 10_000);
    m
}

/// Worst relative error of the projection-loss gradient over three network widths.
pub fn projection_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for (h, seed) in [(8, 1u64), (16, 2), (32, 3)] {
        let m = model(h, seed);
        let x = random_rows(&mut rng, 12, h);
        let pairs: Vec<(usize, usize)> = (0..30)
            .map(|_| loop {
                let (i, j) = (rng.random_range(0..12), rng.random_range(0..12));
                if i != j {
                    break (i, j);
                }
            })
            .collect();
        let targets: Vec<f32> = (0..30).map(|n| if n % 3 == 0 { 0.0 } else { rng.random_range(0.05..1.0) }).collect();
        let CurveParams { a, b } = m.curve;

        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let enc = m.encoder.record(&mut tape, xn).unwrap();
        let loss = tape.pair_cross_entropy(enc.output, pairs.clone(), targets.clone(), a, b).unwrap();
        let autodiff = enc.grads(&tape.backward(loss).unwrap()).unwrap().to_flat();

        let sizes = m.encoder.layer_sizes();
        let acts = m.encoder.activations();
        let x64 = to64(&x);
        let reference = |w: &[f64]| {
            let y = forward64(&sizes, &acts, w, &x64);
            let total: f64 = pairs
                .iter()
                .zip(&targets)
                .map(|(&(i, j), &p)| {
                    let d2 = (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2);
                    pair_bce(p as f64, d2, a as f64, b as f64)
                })
                .sum();
            total / pairs.len() as f64
        };
        let fd = central_diff(reference, &flat64(&m.encoder));
        worst = worst.max(relative_error(&autodiff, &fd));
    }
    worst
}

pub fn reconstruction_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for (h, seed) in [(8, 4u64), (16, 5), (32, 6)] {
        let m = model(h, seed);
        let x = random_rows(&mut rng, 10, h);
        let weights = Matrix::from_vec(10, h, (0..10 * h).map(|_| 1.0 + rng.random_range(0.0..2.0f32)).collect()).unwrap();

        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let enc = m.encoder.record(&mut tape, xn).unwrap();
        let dec = m.decoder.record(&mut tape, enc.output).unwrap();
        let loss = tape.weighted_squared_error(dec.output, xn, weights.clone()).unwrap();
        let g = tape.backward(loss).unwrap();
        let mut autodiff = enc.grads(&g).unwrap().to_flat();
        autodiff.extend(dec.grads(&g).unwrap().to_flat());

        let (es, ea) = (m.encoder.layer_sizes(), m.encoder.activations());
        let (ds, da) = (m.decoder.layer_sizes(), m.decoder.activations());
        let split = m.encoder.parameter_count();
        let x64 = to64(&x);
        let w64 = to64(&weights);
        let reference = |w: &[f64]| {
            let y = forward64(&es, &ea, &w[..split], &x64);
            let r = forward64(&ds, &da, &w[split..], &y);
            let mut total = 0.0;
            for i in 0..x64.len() {
                for d in 0..h {
                    total += w64[i][d] * (x64[i][d] - r[i][d]).powi(2);
                }
            }
            total / (x64.len() * h) as f64
        };
        let mut at = flat64(&m.encoder);
        at.extend(flat64(&m.decoder));
        let fd = central_diff(reference, &at);
        worst = worst.max(relative_error(&autodiff, &fd));
    }
    worst
}

pub fn temporal_gradient_error() -> f64 {
    let mut worst = 0.0f64;
    let prev = model(16, 7);
    let curr = model(16, 8);
    for coefficient in [0.3f32, 0.07, 1.0] {
        let (value, autodiff) = temporal_loss(&curr, &prev, coefficient).unwrap();
        let p: Vec<f64> = prev.flat_parameters().iter().map(|&v| v as f64).collect();
        let reference = |w: &[f64]| coefficient as f64 * w.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let at: Vec<f64> = curr.flat_parameters().iter().map(|&v| v as f64).collect();
        let expected = reference(&at);
        assert!(((value as f64) - expected).abs() <= 1e-5 * expected.max(1.0), "temporal loss value");
        let fd = central_diff(reference, &at);
        worst = worst.max(relative_error(&autodiff, &fd));
    }
    worst
}

