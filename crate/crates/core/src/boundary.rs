//! δ-boundary estimation by mixup bisection between inputs of different
//! predicted classes, with class pairs drawn to balance abundance against
//! synthesis success rate.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::numerics::{minmax_rescale, top2, Matrix};
use crate::subject::{Dataset, SubjectCheckpoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    /// Maximum rescaled top-1/top-2 gap for a point to count as boundary.
    pub delta: f32,
    /// Upper bound on the mixing coefficient of the first endpoint.
    pub lambda_max: f32,
    /// Bisection rounds after the endpoint checks.
    pub max_rounds: usize,
    /// Weight of the abundance term in the pair distribution.
    pub alpha: f64,
    /// Boundary points to synthesize, as a fraction of the training set size.
    pub fraction: f32,
    /// Non-canonical: also search from the other endpoint, so that
    /// `min(λ, 1 − λ) ≤ lambda_max` instead of `λ ≤ lambda_max`.
    pub symmetric_cap: bool,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig { delta: 0.1, lambda_max: 0.4, max_rounds: 16, alpha: 0.8, fraction: 0.1, symmetric_cap: false }
    }
}

impl BoundaryConfig {
    pub fn target_count(&self, train_size: usize) -> usize {
        let t = libm::roundf(self.fraction * train_size as f32);
        if t < 1.0 {
            1
        } else {
            t as usize
        }
    }
}

/// `r(g(x))_top1 − r(g(x))_top2` for a logit vector.
pub fn rescaled_margin(logits: &[f32]) -> Result<f32> {
    let r = minmax_rescale(logits)?;
    let (a, b) = top2(&r).ok_or(Error::DegenerateInput("need at least two logits"))?;
    Ok(r[a] - r[b])
}

/// Whether a logit vector lies on the δ-boundary.
pub fn is_delta_boundary(logits: &[f32], delta: f32) -> Result<bool> {
    Ok(rescaled_margin(logits)? <= delta)
}

/// Whether representation `rep` lies on the δ-boundary of `ckpt`'s head.
pub fn delta_boundary_test(ckpt: &SubjectCheckpoint, rep: &[f32], delta: f32) -> Result<bool> {
    if !(0.0..1.0).contains(&delta) {
        return Err(precondition("delta must lie in [0, 1)"));
    }
    let logits = ckpt.logits(&Matrix::from_vec(1, rep.len(), rep.to_vec())?)?;
    is_delta_boundary(logits.row(0), delta)
}

/// Synthesis counters per unordered class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pairs: Vec<(usize, usize)>,
    num_b: Vec<u32>,
    num_syn: Vec<u32>,
}

impl PairStats {
    /// All unordered pairs over `classes`.
    pub fn new(classes: &[usize]) -> Self {
        let mut pairs = Vec::new();
        for (a, &ci) in classes.iter().enumerate() {
            for &cj in &classes[a + 1..] {
                pairs.push((ci.min(cj), ci.max(cj)));
            }
        }
        let n = pairs.len();
        PairStats { pairs, num_b: alloc::vec![0; n], num_syn: alloc::vec![0; n] }
    }

    /// Builds stats from explicit counts, e.g. for fixtures.
    pub fn from_counts(pairs: Vec<(usize, usize)>, num_b: Vec<u32>, num_syn: Vec<u32>) -> Result<Self> {
        if pairs.len() != num_b.len() || pairs.len() != num_syn.len() {
            return Err(precondition("pair counts must align"));
        }
        if num_b.iter().zip(&num_syn).any(|(b, s)| b > s) {
            return Err(precondition("successes cannot exceed attempts"));
        }
        Ok(PairStats { pairs, num_b, num_syn })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn successes(&self) -> &[u32] {
        &self.num_b
    }

    pub fn attempts(&self) -> &[u32] {
        &self.num_syn
    }

    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.pairs.iter().position(|&p| p == key)
    }

    pub fn record(&mut self, pair: usize, success: bool) {
        self.num_syn[pair] += 1;
        if success {
            self.num_b[pair] += 1;
        }
    }

    /// Relative abundance term: `max(0, ρ − num_b) / Σ max(0, ρ − num_b)` with
    /// `ρ` the mean success count; uniform when every pair is at or above the mean.
    pub fn abundance(&self) -> Vec<f64> {
        let n = self.pairs.len() as f64;
        let mean = self.num_b.iter().map(|&v| v as f64).sum::<f64>() / n;
        let raw: Vec<f64> = self.num_b.iter().map(|&v| (mean - v as f64).max(0.0)).collect();
        normalize_or_uniform(raw)
    }

    /// Success rates normalized over pairs; unexplored pairs count as fully successful.
    pub fn success_rates(&self) -> Vec<f64> {
        let raw = self
            .num_b
            .iter()
            .zip(&self.num_syn)
            .map(|(&b, &s)| if s == 0 { 1.0 } else { b as f64 / s as f64 })
            .collect();
        normalize_or_uniform(raw)
    }

    /// `α·abundance + (1 − α)·success` for every pair.
    pub fn probabilities(&self, alpha: f64) -> Vec<f64> {
        self.abundance()
            .into_iter()
            .zip(self.success_rates())
            .map(|(s, r)| alpha * s + (1.0 - alpha) * r)
            .collect()
    }
}

fn normalize_or_uniform(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let n = raw.len() as f64;
    if total > 0.0 {
        raw.into_iter().map(|v| v / total).collect()
    } else {
        raw.iter().map(|_| 1.0 / n).collect()
    }
}

/// Draws a class pair from the abundance/success mixture.
pub fn sample_class_pair<R: Rng + ?Sized>(stats: &PairStats, alpha: f64, rng: &mut R) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(precondition("alpha must lie in [0, 1]"));
    }
    if stats.pairs.is_empty() {
        return Err(precondition("no class pairs to sample from"));
    }
    Ok(stats.pairs[draw_pair_index(stats, alpha, rng)])
}

fn draw_pair_index<R: Rng + ?Sized>(stats: &PairStats, alpha: f64, rng: &mut R) -> usize {
    let probs = stats.probabilities(alpha);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BisectOutcome {
    Found { rep: Vec<f32>, lambda: f32, evaluations: usize },
    NotFound { evaluations: usize },
}

/// Convex combination `λ·s_i + (1 − λ)·s_j`.
pub fn mix(s_i: &[f32], s_j: &[f32], lambda: f32) -> Vec<f32> {
    s_i.iter().zip(s_j).map(|(&a, &b)| lambda * a + (1.0 - lambda) * b).collect()
}

struct Probe {
    rep: Vec<f32>,
    class: usize,
    on_boundary: bool,
}

fn probe(ckpt: &SubjectCheckpoint, input: Vec<f32>, delta: f32) -> Result<Probe> {
    let x = Matrix::from_vec(1, input.len(), input)?;
    let rep = ckpt.features(&x)?;
    let logits = ckpt.logits(&rep)?;
    let row = logits.row(0);
    let class = crate::numerics::argmax(row);
    let on_boundary = match is_delta_boundary(row, delta) {
        Ok(v) => v,
        Err(Error::DegenerateInput(_)) => false,
        Err(e) => return Err(e),
    };
    Ok(Probe { rep: rep.into_vec(), class, on_boundary })
}

/// Searches `λ ∈ (0, λ_max]` for a mixture of `s_i` and `s_j` whose representation
/// lies on the δ-boundary. The bracket starts at `[0, λ_max]` and halves every round.
pub fn mixup_bisect(
    ckpt: &SubjectCheckpoint,
    s_i: &[f32],
    s_j: &[f32],
    delta: f32,
    lambda_max: f32,
    max_rounds: usize,
) -> Result<BisectOutcome> {
    if !(lambda_max > 0.0 && lambda_max <= 1.0) {
        return Err(precondition("lambda_max must lie in (0, 1]"));
    }
    if max_rounds == 0 {
        return Err(precondition("at least one bisection round is required"));
    }
    if s_i.len() != s_j.len() || s_i.len() != ckpt.input_dim() {
        return Err(Error::Dimension { op: "mixup_bisect", expected: (1, ckpt.input_dim()), found: (s_i.len(), s_j.len()) });
    }
    let start = probe(ckpt, s_j.to_vec(), delta)?;
    let end = probe(ckpt, s_i.to_vec(), delta)?;
    if start.class == end.class {
        return Err(precondition("mixup endpoints must be predicted as different classes"));
    }
    let capped = probe(ckpt, mix(s_i, s_j, lambda_max), delta)?;
    if capped.class == start.class {
        return Ok(BisectOutcome::NotFound { evaluations: 0 });
    }
    if capped.on_boundary {
        return Ok(BisectOutcome::Found { rep: capped.rep, lambda: lambda_max, evaluations: 0 });
    }
    let (mut lo, mut hi) = (0.0f32, lambda_max);
    for round in 1..=max_rounds {
        let mid = 0.5 * (lo + hi);
        let p = probe(ckpt, mix(s_i, s_j, mid), delta)?;
        if p.on_boundary && mid > 0.0 {
            return Ok(BisectOutcome::Found { rep: p.rep, lambda: mid, evaluations: round });
        }
        if p.class == start.class {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BisectOutcome::NotFound { evaluations: max_rounds })
}

/// Where a boundary point came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Id of the sample weighted by `lambda`.
    pub source_i: u64,
    /// Id of the sample weighted by `1 − lambda`.
    pub source_j: u64,
    pub lambda: f32,
    pub pair: (usize, usize),
    /// Attempt counter at which the point was accepted.
    pub attempt: usize,
}

/// Synthesized boundary representations with provenance and pair statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    pub points: Matrix,
    pub provenance: Vec<Provenance>,
    pub stats: PairStats,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

/// Synthesizes at least `target_count` δ-boundary points for `ckpt`.
///
/// Gives up with [`Error::SynthesisExhausted`] after `100 × target_count` attempts.
pub fn synthesize_boundary_set(
    ckpt: &SubjectCheckpoint,
    dataset: &Dataset,
    target_count: usize,
    config: &BoundaryConfig,
    seed: u64,
) -> Result<BoundarySet> {
    if target_count == 0 {
        return Err(precondition("target boundary count must be positive"));
    }
    if ckpt.class_count() < 3 {
        return Err(precondition("δ-boundary synthesis needs at least three classes"));
    }
    if !(0.0..1.0).contains(&config.delta) {
        return Err(precondition("delta must lie in [0, 1)"));
    }
    let predicted = ckpt.classify(dataset.inputs())?;
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); ckpt.class_count()];
    for (i, &c) in predicted.iter().enumerate() {
        by_class[c].push(i);
    }
    let active: Vec<usize> = (0..ckpt.class_count()).filter(|&c| !by_class[c].is_empty()).collect();
    if active.len() < 2 {
        return Err(precondition("the classifier predicts fewer than two distinct classes"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = PairStats::new(&active);
    let mut rows: Vec<f32> = Vec::new();
    let mut provenance = Vec::new();
    let max_attempts = 100 * target_count;
    let mut attempt = 0;
    while provenance.len() < target_count {
        if attempt >= max_attempts {
            return Err(Error::SynthesisExhausted { attempts: attempt, found: provenance.len(), target: target_count });
        }
        attempt += 1;
        let pair_idx = draw_pair_index(&stats, config.alpha, &mut rng);
        let (ca, cb) = stats.pairs[pair_idx];
        let (ci, cj) = if rng.random::<bool>() { (ca, cb) } else { (cb, ca) };
        let i = by_class[ci][rng.random_range(0..by_class[ci].len())];
        let j = by_class[cj][rng.random_range(0..by_class[cj].len())];
        let (s_i, s_j) = (dataset.inputs().row(i), dataset.inputs().row(j));

        let mut outcome = mixup_bisect(ckpt, s_i, s_j, config.delta, config.lambda_max, config.max_rounds)?;
        let mut sources = (i, j);
        if config.symmetric_cap && matches!(outcome, BisectOutcome::NotFound { .. }) {
            outcome = mixup_bisect(ckpt, s_j, s_i, config.delta, config.lambda_max, config.max_rounds)?;
            sources = (j, i);
        }
        match outcome {
            BisectOutcome::Found { rep, lambda, .. } => {
                stats.record(pair_idx, true);
                rows.extend_from_slice(&rep);
                provenance.push(Provenance {
                    source_i: dataset.ids()[sources.0],
                    source_j: dataset.ids()[sources.1],
                    lambda,
                    pair: (ca, cb),
                    attempt,
                });
            }
            BisectOutcome::NotFound { .. } => stats.record(pair_idx, false),
        }
    }
    let points = Matrix::from_vec(provenance.len(), ckpt.rep_dim(), rows)?;
    Ok(BoundarySet { points, provenance, stats })
}
