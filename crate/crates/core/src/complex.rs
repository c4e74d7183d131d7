//! Boundary-augmented neighbor complex over data representations and
//! boundary points, with fuzzy membership weights and pair sampling.
//!
//! Vertices are numbered data-first: data point `i` is vertex `i`, boundary
//! point `j` is vertex `data_count + j`. The 1-simplices are
//!
//! * `xx`: `x_i` to each of its `k` nearest data neighbors,
//! * `xb`: `x_i` to each of its `k` nearest boundary points,
//! * `bb`: `b_i` to each of its `k` nearest boundary neighbors,
//!
//! stored once per unordered vertex pair.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::knn::{build_knn, knn_cross, Neighbor};
use crate::numerics::Matrix;

const CALIBRATION_ROUNDS: usize = 64;
const CALIBRATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Xx,
    Xb,
    Bb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Smaller vertex id.
    pub i: usize,
    /// Larger vertex id.
    pub j: usize,
    pub kind: EdgeKind,
    pub weight: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BavrComplex {
    k: usize,
    data_count: usize,
    boundary_count: usize,
    /// Sorted by `(i, j)`.
    edges: Vec<Edge>,
}

impl BavrComplex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data_count(&self) -> usize {
        self.data_count
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_count
    }

    pub fn vertex_count(&self) -> usize {
        self.data_count + self.boundary_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        v >= self.data_count
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search_by(|e| (e.i, e.j).cmp(&key)).is_ok()
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Rebuilds a complex from its parts, e.g. after deserialization.
    pub fn from_parts(k: usize, data_count: usize, boundary_count: usize, mut edges: Vec<Edge>) -> Result<Self> {
        let n = data_count + boundary_count;
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(precondition("edge endpoints must satisfy i < j < vertex count"));
            }
            if kind_of(e.i, e.j, data_count) != e.kind {
                return Err(precondition("edge kind does not match its endpoints"));
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if edges.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(precondition("duplicate edge"));
        }
        Ok(BavrComplex { k, data_count, boundary_count, edges })
    }
}

fn kind_of(i: usize, j: usize, data_count: usize) -> EdgeKind {
    match (i >= data_count, j >= data_count) {
        (false, false) => EdgeKind::Xx,
        (true, true) => EdgeKind::Bb,
        _ => EdgeKind::Xb,
    }
}

/// Directed memberships `p_{j|i} = exp(−max(0, d_ij − ρ_i) / σ_i)` for one neighbor
/// list, with `ρ_i` the nearest distance and `σ_i` bisected so the memberships sum
/// to `log₂(k)`.
pub fn membership_strengths(neighbors: &[Neighbor]) -> Result<Vec<f32>> {
    let k = neighbors.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let target = libm::log2(k as f64);
    let rho = neighbors[0].distance as f64;
    let excess: Vec<f64> = neighbors.iter().map(|n| (n.distance as f64 - rho).max(0.0)).collect();
    let total = |sigma: f64| -> f64 { excess.iter().map(|&e| if e > 0.0 { libm::exp(-e / sigma) } else { 1.0 }).sum() };

    // Neighbors tied with the nearest one keep membership 1 for every σ. If they
    // already reach the target, the solution is the σ → 0 limit.
    let tied = excess.iter().filter(|&&e| e == 0.0).count();
    if tied as f64 >= target {
        return Ok(excess.iter().map(|&e| if e == 0.0 { 1.0 } else { f32::MIN_POSITIVE }).collect());
    }

    let (mut lo, mut hi, mut sigma) = (0.0f64, f64::INFINITY, 1.0f64);
    let mut sum = total(sigma);
    for _ in 0..CALIBRATION_ROUNDS {
        if (sum - target).abs() < 1e-6 {
            break;
        }
        if sum > target {
            hi = sigma;
            sigma = 0.5 * (lo + hi);
        } else {
            lo = sigma;
            sigma = if hi.is_infinite() { sigma * 2.0 } else { 0.5 * (lo + hi) };
        }
        sum = total(sigma);
    }
    if !((sum - target).abs() < CALIBRATION_TOLERANCE) {
        return Err(Error::Convergence { what: "membership bandwidth bisection", iterations: CALIBRATION_ROUNDS });
    }
    Ok(excess
        .iter()
        .map(|&e| {
            let p = if e > 0.0 { libm::exp(-e / sigma) } else { 1.0 };
            (p as f32).max(f32::MIN_POSITIVE)
        })
        .collect())
}

/// Probabilistic t-conorm `a + b − a·b`.
pub fn fuzzy_union(a: f32, b: f32) -> f32 {
    if a == 1.0 || b == 1.0 {
        // a + b − a·b rounds below 1 in f32
        return 1.0;
    }
    a + b - a * b
}

#[derive(Default)]
struct Directed {
    kind: Option<EdgeKind>,
    // membership of the larger id given the smaller, and vice versa
    forward: f32,
    backward: f32,
}

fn add_directed(map: &mut BTreeMap<(usize, usize), Directed>, from: usize, to: usize, kind: EdgeKind, p: f32) {
    let key = (from.min(to), from.max(to));
    let entry = map.entry(key).or_default();
    entry.kind = Some(kind);
    if from < to {
        entry.forward = p;
    } else {
        entry.backward = p;
    }
}

/// Builds the weighted complex over `data ∪ boundary`. Passing `None` for the
/// boundary set keeps only the data-to-data simplices.
pub fn build_bavr_complex(data: &Matrix, boundary: Option<&Matrix>, k: usize) -> Result<BavrComplex> {
    if data.rows() <= k {
        return Err(precondition(alloc::format!("need more than k = {k} data points, got {}", data.rows())));
    }
    let n = data.rows();
    let mut map: BTreeMap<(usize, usize), Directed> = BTreeMap::new();

    let xx = build_knn(data, k)?;
    for (i, list) in xx.lists().iter().enumerate() {
        for (nb, p) in list.iter().zip(membership_strengths(list)?) {
            add_directed(&mut map, i, nb.index, EdgeKind::Xx, p);
        }
    }

    let mut boundary_count = 0;
    if let Some(b) = boundary {
        if b.rows() <= k {
            return Err(precondition(alloc::format!("need more than k = {k} boundary points, got {}", b.rows())));
        }
        if b.cols() != data.cols() {
            return Err(Error::Dimension { op: "bavr complex", expected: (b.rows(), data.cols()), found: b.shape() });
        }
        boundary_count = b.rows();
        let xb = knn_cross(data, b, k)?;
        for (i, list) in xb.lists().iter().enumerate() {
            for (nb, p) in list.iter().zip(membership_strengths(list)?) {
                add_directed(&mut map, i, n + nb.index, EdgeKind::Xb, p);
            }
        }
        let bb = build_knn(b, k)?;
        for (i, list) in bb.lists().iter().enumerate() {
            for (nb, p) in list.iter().zip(membership_strengths(list)?) {
                add_directed(&mut map, n + i, n + nb.index, EdgeKind::Bb, p);
            }
        }
    }

    let edges = map
        .into_iter()
        .map(|((i, j), d)| Edge {
            i,
            j,
            kind: d.kind.expect("every entry is inserted with a kind"),
            weight: fuzzy_union(d.forward, d.backward).min(1.0),
        })
        .collect();
    Ok(BavrComplex { k, data_count: n, boundary_count, edges })
}

/// One training pair: a complex edge (target = its weight) or a sampled non-edge (target 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub i: usize,
    pub j: usize,
    pub target: f32,
    pub kind: EdgeKind,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairBatch {
    pub pairs: Vec<PairSample>,
}

impl PairBatch {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.positive).count()
    }
}

/// One epoch of training pairs: every edge once as a positive, in shuffled
/// order, `batch_size` positives per batch, each followed by `negative_rate`
/// negatives of the same vertex-kind product that are not complex edges.
///
/// A kind whose product is completely covered by edges has no negatives to draw
/// and contributes positives only.
pub fn sample_pair_batches<R: Rng + ?Sized>(
    complex: &BavrComplex,
    negative_rate: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<PairBatch>> {
    if negative_rate < 1 {
        return Err(precondition("negative rate must be at least 1"));
    }
    if batch_size == 0 {
        return Err(precondition("batch size must be positive"));
    }
    let n = complex.data_count;
    let m = complex.boundary_count;
    let capacity = |kind: EdgeKind| -> usize {
        match kind {
            EdgeKind::Xx => n * n.saturating_sub(1) / 2,
            EdgeKind::Xb => n * m,
            EdgeKind::Bb => m * m.saturating_sub(1) / 2,
        }
    };
    let has_negatives = [EdgeKind::Xx, EdgeKind::Xb, EdgeKind::Bb].map(|k| complex.count(k) < capacity(k));

    let mut order: Vec<usize> = (0..complex.edges.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let mut pairs = Vec::with_capacity(chunk.len() * (1 + negative_rate));
        for &e in chunk {
            let edge = complex.edges[e];
            pairs.push(PairSample { i: edge.i, j: edge.j, target: edge.weight, kind: edge.kind, positive: true });
            if !has_negatives[edge.kind as usize] {
                continue;
            }
            for _ in 0..negative_rate {
                let (a, b) = loop {
                    let (a, b) = match edge.kind {
                        EdgeKind::Xx => (rng.random_range(0..n), rng.random_range(0..n)),
                        EdgeKind::Xb => (rng.random_range(0..n), n + rng.random_range(0..m)),
                        EdgeKind::Bb => (n + rng.random_range(0..m), n + rng.random_range(0..m)),
                    };
                    if a != b && !complex.contains(a, b) {
                        break (a, b);
                    }
                };
                pairs.push(PairSample { i: a, j: b, target: 0.0, kind: edge.kind, positive: false });
            }
        }
        batches.push(PairBatch { pairs });
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(distances: &[f32]) -> Vec<Neighbor> {
        distances.iter().enumerate().map(|(index, &distance)| Neighbor { index, distance }).collect()
    }

    #[test]
    fn nearest_neighbor_has_full_membership() {
        let p = membership_strengths(&nb(&[0.5, 0.7, 1.0, 1.4, 2.0])).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn memberships_sum_to_log2_k() {
        let d = [0.2, 0.25, 0.4, 0.41, 0.6, 0.9, 1.3, 1.5, 1.6, 2.2, 2.5, 3.0, 3.1, 3.3, 4.0];
        let p = membership_strengths(&nb(&d)).unwrap();
        let total: f64 = p.iter().map(|&v| v as f64).sum();
        assert!((total - libm::log2(15.0)).abs() < 1e-3);
    }

    #[test]
    fn unreachable_targets_take_the_small_bandwidth_limit() {
        assert_eq!(membership_strengths(&nb(&[1.0])).unwrap(), [1.0]);
        assert_eq!(membership_strengths(&nb(&[1.0, 2.0])).unwrap(), [1.0, f32::MIN_POSITIVE]);
        let tied = membership_strengths(&nb(&[1.0, 1.0, 1.0, 2.0])).unwrap();
        assert_eq!(tied, [1.0, 1.0, 1.0, f32::MIN_POSITIVE]);
    }

    #[test]
    fn fuzzy_union_example() {
        assert!((fuzzy_union(0.5, 0.4) - 0.7).abs() < 1e-7);
    }

    #[test]
    fn boundary_set_must_exceed_k() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.5], [1.5]]).unwrap();
        assert!(build_bavr_complex(&x, Some(&b), 2).is_err());
        assert!(build_bavr_complex(&x, Some(&Matrix::zeros(0, 1)), 1).is_err());
    }

    #[test]
    fn from_parts_validates_kinds() {
        let e = Edge { i: 0, j: 3, kind: EdgeKind::Xx, weight: 1.0 };
        assert!(BavrComplex::from_parts(1, 2, 2, alloc::vec![e]).is_err());
        let e = Edge { i: 0, j: 3, kind: EdgeKind::Xb, weight: 1.0 };
        assert!(BavrComplex::from_parts(1, 2, 2, alloc::vec![e]).is_ok());
    }
}
