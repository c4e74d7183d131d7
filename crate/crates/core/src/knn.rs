//! Exact k-nearest-neighbor search by blocked brute force.
//!
//! Candidates are ordered by `(squared distance, index)`, so ties always
//! resolve to the lower index and the result does not depend on the order
//! in which blocks are visited.

use alloc::vec::Vec;

use crate::error::{precondition, Error, Result};
use crate::numerics::{squared_distance, Matrix};

const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f32,
}

/// Per-query neighbor lists sorted by ascending distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl NeighborIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    /// Neighbor indices of query `i`, nearest first.
    pub fn indices(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.lists[i].iter().map(|n| n.index)
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }
}

/// Bounded best-k buffer kept sorted by `(d², index)`.
struct TopK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK { k, items: Vec::with_capacity(k + 1) }
    }

    fn offer(&mut self, d2: f64, index: usize) {
        let cand = (d2, index);
        if self.items.len() == self.k {
            let worst = self.items[self.k - 1];
            if !less(cand, worst) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&it| less(it, cand));
        self.items.insert(pos, cand);
    }

    fn finish(self) -> Vec<Neighbor> {
        self.items
            .into_iter()
            .map(|(d2, index)| Neighbor { index, distance: libm::sqrt(d2) as f32 })
            .collect()
    }
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn search(queries: &Matrix, refs: &Matrix, k: usize, exclude_self: bool) -> Vec<Vec<Neighbor>> {
    let mut heaps: Vec<TopK> = (0..queries.rows()).map(|_| TopK::new(k)).collect();
    for q0 in (0..queries.rows()).step_by(BLOCK) {
        let q1 = (q0 + BLOCK).min(queries.rows());
        for r0 in (0..refs.rows()).step_by(BLOCK) {
            let r1 = (r0 + BLOCK).min(refs.rows());
            for (q, heap) in heaps[q0..q1].iter_mut().enumerate() {
                let qi = q0 + q;
                let qrow = queries.row(qi);
                for r in r0..r1 {
                    if exclude_self && r == qi {
                        continue;
                    }
                    heap.offer(squared_distance(qrow, refs.row(r)), r);
                }
            }
        }
    }
    heaps.into_iter().map(TopK::finish).collect()
}

/// The `k` nearest other points of every point.
pub fn build_knn(points: &Matrix, k: usize) -> Result<NeighborIndex> {
    if k == 0 {
        return Err(precondition("k must be at least 1"));
    }
    if points.rows() <= k {
        return Err(precondition(alloc::format!("need more than k = {k} points, got {}", points.rows())));
    }
    Ok(NeighborIndex { k, lists: search(points, points, k, true) })
}

/// The `k` nearest rows of `refs` for every row of `queries`.
pub fn knn_cross(queries: &Matrix, refs: &Matrix, k: usize) -> Result<NeighborIndex> {
    if k == 0 {
        return Err(precondition("k must be at least 1"));
    }
    if refs.rows() < k {
        return Err(precondition(alloc::format!("need at least k = {k} reference points, got {}", refs.rows())));
    }
    if queries.cols() != refs.cols() && queries.rows() > 0 {
        return Err(Error::Dimension { op: "knn_cross", expected: (refs.rows(), queries.cols()), found: refs.shape() });
    }
    Ok(NeighborIndex { k, lists: search(queries, refs, k, false) })
}
