//! Brute-force reference implementations used as test oracles.
//!
//! Everything here works straight from the definitions with full sorts and f64
//! arithmetic, sharing no code with the crate beyond `Matrix` for input.

#![allow(dead_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fixture;
pub mod gradients;

use std::collections::BTreeMap;

use tracevis_core::complex::EdgeKind;
use tracevis_core::numerics::{Activation, Matrix};

pub fn rows64(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Indices of the `k` rows of `refs` closest to `q`, ascending by `(distance, index)`.
pub fn nearest(q: &[f32], refs: &Matrix, k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> =
        (0..refs.rows()).filter(|&r| Some(r) != skip).map(|r| (sq_dist(q, refs.row(r)), r)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(d2, r)| (r, d2.sqrt())).collect()
}

pub fn knn_sets(points: &Matrix, k: usize) -> Vec<Vec<usize>> {
    (0..points.rows()).map(|i| nearest(points.row(i), points, k, Some(i)).into_iter().map(|(r, _)| r).collect()).collect()
}

pub fn boundary_sets(points: &Matrix, boundary: &Matrix, k: usize) -> Vec<Vec<usize>> {
    (0..points.rows()).map(|i| nearest(points.row(i), boundary, k, None).into_iter().map(|(r, _)| r).collect()).collect()
}

/// Edge set of the complex: the union of the three witness conditions, vertex ids
/// with boundary points offset by `|X|`.
pub fn bavr_edges(x: &Matrix, b: &Matrix, k: usize) -> BTreeMap<(usize, usize), EdgeKind> {
    let n = x.rows();
    let mut edges = BTreeMap::new();
    let mut put = |u: usize, v: usize, kind| {
        edges.insert((u.min(v), u.max(v)), kind);
    };
    for (i, list) in knn_sets(x, k).into_iter().enumerate() {
        for j in list {
            put(i, j, EdgeKind::Xx);
        }
    }
    for (i, list) in boundary_sets(x, b, k).into_iter().enumerate() {
        for j in list {
            put(i, n + j, EdgeKind::Xb);
        }
    }
    for (i, list) in knn_sets(b, k).into_iter().enumerate() {
        for j in list {
            put(n + i, n + j, EdgeKind::Bb);
        }
    }
    edges
}

/// Directed memberships for one sorted distance list, bandwidth found by bisecting
/// `log σ` until the memberships sum to `log₂ k`.
pub fn memberships(distances: &[f64]) -> Vec<f64> {
    let rho = distances[0];
    let target = (distances.len() as f64).log2();
    let sum = |sigma: f64| distances.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum::<f64>();
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(mid.exp()) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sigma = (0.5 * (lo + hi)).exp();
    distances.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).collect()
}

/// Symmetrized edge weights keyed like [`bavr_edges`].
pub fn bavr_weights(x: &Matrix, b: &Matrix, k: usize) -> BTreeMap<(usize, usize), f64> {
    let n = x.rows();
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut add = |from: usize, list: Vec<(usize, f64)>, offset: usize| {
        let d: Vec<f64> = list.iter().map(|&(_, d)| d).collect();
        for ((j, _), p) in list.iter().zip(memberships(&d)) {
            directed.insert((from, offset + j), p);
        }
    };
    for i in 0..n {
        add(i, nearest(x.row(i), x, k, Some(i)), 0);
        add(i, nearest(x.row(i), b, k, None), n);
    }
    for i in 0..b.rows() {
        add(n + i, nearest(b.row(i), b, k, Some(i)), n);
    }
    let mut out = BTreeMap::new();
    for (&(u, v), &p) in &directed {
        let key = (u.min(v), u.max(v));
        if out.contains_key(&key) {
            continue;
        }
        let q = directed.get(&(v, u)).copied().unwrap_or(0.0);
        out.insert(key, p + q - p * q);
    }
    out
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|v| b.contains(v)).count()
}

pub fn nn_pv(x: &Matrix, y: &Matrix, k: usize) -> f64 {
    let (a, b) = (knn_sets(x, k), knn_sets(y, k));
    let total: usize = a.iter().zip(&b).map(|(p, q)| overlap(p, q)).sum();
    total as f64 / (x.rows() * k) as f64
}

pub fn boundary_pv(x: &Matrix, y: &Matrix, b: &Matrix, b_proj: &Matrix, k: usize) -> f64 {
    let (p, q) = (boundary_sets(x, b, k), boundary_sets(y, b_proj, k));
    let total: usize = p.iter().zip(&q).map(|(s, t)| overlap(s, t)).sum();
    total as f64 / (x.rows() * k) as f64
}

pub fn eval_sem(prev: &Matrix, curr: &Matrix, k: usize) -> Vec<f64> {
    let (a, b) = (knn_sets(prev, k), knn_sets(curr, k));
    a.iter().zip(&b).map(|(p, q)| overlap(p, q) as f64 / k as f64).collect()
}

/// Pearson correlation from the covariance definition, with two-pass centring.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// f64 forward pass of a network described by `(sizes, activations, flat params)`,
/// with parameters laid out weights (in×out, row-major) then biases, layer by layer.
pub fn forward64(sizes: &[usize], acts: &[Activation], flat: &[f64], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = x.to_vec();
    let mut off = 0;
    for (l, act) in acts.iter().enumerate() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &flat[off..off + n_in * n_out];
        let b = &flat[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        rows = rows
            .iter()
            .map(|r| {
                (0..n_out)
                    .map(|o| {
                        let z: f64 = (0..n_in).map(|i| r[i] * w[i * n_out + o]).sum::<f64>() + b[o];
                        match act {
                            Activation::Relu => z.max(0.0),
                            Activation::Identity => z,
                        }
                    })
                    .collect()
            })
            .collect();
    }
    rows
}

/// Cross-entropy of one pair with `q = 1 / (1 + a·d2^b)`, logs clamped at 1e-7.
pub fn pair_bce(p: f64, d2: f64, a: f64, b: f64) -> f64 {
    let q = 1.0 / (1.0 + a * d2.powf(b));
    let lq = q.max(1e-7).ln();
    let l1q = (1.0 - q).max(1e-7).ln();
    -(p * lq + (1.0 - p) * l1q)
}

pub const FD_STEP: f64 = 1e-6;

pub fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖autodiff − reference‖ / ‖reference‖`.
pub fn relative_error(autodiff: &[f32], reference: &[f64]) -> f64 {
    assert_eq!(autodiff.len(), reference.len());
    let diff: f64 = autodiff.iter().zip(reference).map(|(&a, &r)| (a as f64 - r).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Rescaled top-1/top-2 logit gap of a representation, evaluated in f64 from the
/// head's raw parameters.
pub fn boundary_gap(head: &tracevis_core::numerics::MlpParams, rep: &[f32]) -> f64 {
    let flat: Vec<f64> = head.to_flat().iter().map(|&v| v as f64).collect();
    let x = vec![rep.iter().map(|&v| v as f64).collect::<Vec<f64>>()];
    let logits = forward64(&head.layer_sizes(), &head.activations(), &flat, &x).remove(0);
    let lo = logits.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut r: Vec<f64> = logits.iter().map(|v| (v - lo) / (hi - lo)).collect();
    r.sort_by(|a, b| b.partial_cmp(a).unwrap());
    r[0] - r[1]
}

/// Class-pair probabilities `α·abundance + (1 − α)·success` from raw counters.
pub fn pair_law(num_b: &[u32], num_syn: &[u32], alpha: f64) -> Vec<f64> {
    let n = num_b.len() as f64;
    let rho = num_b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let deficit: Vec<f64> = num_b.iter().map(|&v| (rho - v as f64).max(0.0)).collect();
    let rate: Vec<f64> =
        num_b.iter().zip(num_syn).map(|(&b, &s)| if s == 0 { 1.0 } else { b as f64 / s as f64 }).collect();
    let norm = |v: Vec<f64>| {
        let t: f64 = v.iter().sum();
        if t > 0.0 { v.iter().map(|x| x / t).collect::<Vec<_>>() } else { vec![1.0 / n; v.len()] }
    };
    let (deficit, rate) = (norm(deficit), norm(rate));
    deficit.iter().zip(&rate).map(|(d, r)| alpha * d + (1.0 - alpha) * r).collect()
}

/// Class pairs with their boundary and attempt counters.
pub type PairFixture = (Vec<(usize, usize)>, Vec<u32>, Vec<u32>);

/// Hand-built pair counters `(pairs, num_b, num_syn)`.
pub fn pair_fixtures() -> Vec<PairFixture> {
    vec![
        (vec![(0, 1), (0, 2), (1, 2)], vec![10, 2, 6], vec![20, 10, 6]),
        (vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], vec![0, 0, 3, 7, 1, 1], vec![0, 4, 9, 7, 8, 2]),
        (vec![(0, 1), (0, 2), (1, 2)], vec![5, 5, 5], vec![9, 25, 5]),
    ]
}

/// Largest gap between empirical and expected pair frequencies over `draws` samples.
pub fn pair_sampling_gap(draws: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    use tracevis_core::boundary::{sample_class_pair, PairStats};
    let alpha = 0.8;
    let mut worst = 0.0f64;
    for (i, (pairs, b, s)) in pair_fixtures().into_iter().enumerate() {
        let want = pair_law(&b, &s, alpha);
        let stats = PairStats::from_counts(pairs.clone(), b, s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + i as u64);
        let mut counts = vec![0usize; pairs.len()];
        for _ in 0..draws {
            let p = sample_class_pair(&stats, alpha, &mut rng).unwrap();
            counts[pairs.iter().position(|&q| q == p).unwrap()] += 1;
        }
        for (c, w) in counts.iter().zip(&want) {
            worst = worst.max((*c as f64 / draws as f64 - w).abs());
        }
    }
    worst
}

/// Boundary points failing the δ test on independent re-evaluation, plus the
/// largest recorded mixing coefficient.
pub fn boundary_audit(
    ckpt: &tracevis_core::subject::SubjectCheckpoint,
    set: &tracevis_core::boundary::BoundarySet,
    delta: f32,
) -> (usize, f32) {
    let bad = set.points.iter_rows().filter(|r| !(boundary_gap(&ckpt.head, r) <= delta as f64)).count();
    let lambda = set.provenance.iter().map(|p| p.lambda).fold(0.0f32, f32::max);
    (bad, lambda)
}

/// Re-evaluates `count` random pixels of a raster one at a time through the decoder
/// and head, returning how many disagree with the stored class or boundary flag.
pub fn landscape_audit(
    model: &tracevis_core::visualizer::VisualizationModel,
    ckpt: &tracevis_core::subject::SubjectCheckpoint,
    raster: &tracevis_core::landscape::LandscapeRaster,
    delta: f32,
    count: usize,
    seed: u64,
) -> usize {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (raster.width, raster.height);
    let mut wrong = 0;
    for _ in 0..count {
        let (row, col) = (rng.random_range(0..h), rng.random_range(0..w));
        let (x, y) = raster.extent.pixel_center(row, col, w, h);
        let rep = model.inverse_project(&Matrix::from_vec(1, 2, vec![x, y]).unwrap()).unwrap();
        let logits: Vec<f64> = ckpt.logits(&rep).unwrap().row(0).iter().map(|&v| v as f64).collect();
        let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = logits.iter().cloned().fold(f64::INFINITY, f64::min);
        let class = logits.iter().position(|&v| v == hi).unwrap();
        let flagged = if hi == lo {
            true
        } else {
            let mut r: Vec<f64> = logits.iter().map(|v| (v - lo) / (hi - lo)).collect();
            r.sort_by(|a, b| b.partial_cmp(a).unwrap());
            r[0] - r[1] <= delta as f64
        };
        let p = raster.index(row, col);
        if raster.classes[p] as usize != class || raster.boundary[p] != flagged {
            wrong += 1;
        }
    }
    wrong
}

fn uniform_matrix(rng: &mut rand_chacha::ChaCha8Rng, n: usize, h: usize, shift: f32) -> Matrix {
    use rand::Rng;
    Matrix::from_vec(n, h, (0..n * h).map(|_| rng.random_range(-1.0f32..1.0) + shift).collect()).unwrap()
}

/// Builds the complex on `rounds` random instances (|X| ≤ 200, |B| ≤ 40, k alternating
/// 5 and 15) and counts instances whose edge set differs from [`bavr_edges`].
pub fn complex_mismatches(rounds: usize, seed: u64) -> usize {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for round in 0..rounds {
        let k = if round % 2 == 0 { 5 } else { 15 };
        let n = rng.random_range(k + 1..=200);
        let m = rng.random_range(k + 1..=40);
        let h = rng.random_range(2..=12);
        let x = uniform_matrix(&mut rng, n, h, 0.0);
        let b = uniform_matrix(&mut rng, m, h, 0.3);
        let complex = tracevis_core::complex::build_bavr_complex(&x, Some(&b), k).unwrap();
        let got: Vec<((usize, usize), EdgeKind)> = complex.edges().iter().map(|e| ((e.i, e.j), e.kind)).collect();
        let want: Vec<((usize, usize), EdgeKind)> = bavr_edges(&x, &b, k).into_iter().collect();
        if got != want {
            bad += 1;
        }
    }
    bad
}

/// Largest absolute difference between the crate's rate metrics and the brute-force
/// versions over random instances with N ≤ 200.
pub fn metric_oracle_gap(rounds: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    use tracevis_core::metrics as m;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for round in 0..rounds {
        let n = rng.random_range(30..=200);
        let h = rng.random_range(3..=16);
        let k = [10, 15, 20][round % 3];
        let x = uniform_matrix(&mut rng, n, h, 0.0);
        let map = uniform_matrix(&mut rng, h, 2, 0.0);
        let mut jitter = |mat: Matrix| {
            let mut y = mat;
            y.as_mut_slice().iter_mut().for_each(|v| *v += 0.3 * rng.random_range(-1.0f32..1.0));
            y
        };
        let y = jitter(x.matmul(&map).unwrap());
        let b = uniform_matrix(&mut rng, 40, h, 0.0);
        let bp = b.matmul(&map).unwrap();
        let next = {
            let mut v = x.clone();
            v.as_mut_slice().iter_mut().for_each(|e| *e += 0.2 * rng.random_range(-1.0f32..1.0));
            v
        };
        let ynext = {
            let mut v = next.matmul(&map).unwrap();
            v.as_mut_slice().iter_mut().for_each(|e| *e += 0.3 * rng.random_range(-1.0f32..1.0));
            v
        };
        let mut gap = |a: f64, b: f64| worst = worst.max((a - b).abs());
        gap(m::nn_preserving(&x, &y, k).unwrap(), nn_pv(&x, &y, k));
        gap(m::boundary_preserving(&x, &y, &b, &bp, k).unwrap(), boundary_pv(&x, &y, &b, &bp, k));
        let sem = m::eval_sem(&x, &next, k).unwrap();
        for (a, b) in sem.iter().zip(eval_sem(&x, &next, k)) {
            gap(*a, b);
        }
        let disp = m::displacement(&y, &ynext).unwrap();
        let disp_oracle: Vec<f64> = y
            .iter_rows()
            .zip(ynext.iter_rows())
            .map(|(p, q)| p.iter().zip(q).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>().sqrt())
            .collect();
        for (a, b) in disp.iter().zip(&disp_oracle) {
            gap(*a, *b);
        }
        gap(m::temporal_pv(&sem, &disp).unwrap(), pearson(&sem, &disp_oracle));
    }
    worst
}
