//! Preservation measurements for a projection and a PCA baseline.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::knn::{build_knn, knn_cross, NeighborIndex};
use crate::numerics::{argmax, Matrix};
use crate::subject::{SubjectCheckpoint, Split};

/// Anything with a forward map to the plane and an inverse map back.
pub trait Projector {
    fn project(&self, reps: &Matrix) -> Result<Matrix>;
    fn reconstruct(&self, points: &Matrix) -> Result<Matrix>;
}

fn overlap(a: &NeighborIndex, b: &NeighborIndex, i: usize) -> usize {
    // both lists are short (k ≤ a few dozen), quadratic scan is fine
    a.indices(i).filter(|x| b.indices(i).any(|y| y == *x)).count()
}

fn check_aligned(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension { op, expected: (a.rows(), b.cols()), found: b.shape() });
    }
    Ok(())
}

/// Mean fraction of each point's `k` nearest neighbors kept by the projection.
pub fn nn_preserving(x: &Matrix, y: &Matrix, k: usize) -> Result<f64> {
    check_aligned("nn_preserving", x, y)?;
    let (nx, ny) = (build_knn(x, k)?, build_knn(y, k)?);
    let n = x.rows();
    let total: usize = (0..n).map(|i| overlap(&nx, &ny, i)).sum();
    Ok(total as f64 / (n as f64 * k as f64))
}

/// Mean fraction of each point's `k` nearest boundary points kept by the projection.
pub fn boundary_preserving(x: &Matrix, y: &Matrix, b: &Matrix, b_proj: &Matrix, k: usize) -> Result<f64> {
    check_aligned("boundary_preserving", x, y)?;
    check_aligned("boundary_preserving", b, b_proj)?;
    if b.rows() <= k {
        return Err(precondition(alloc::format!("need more than k = {k} boundary points, got {}", b.rows())));
    }
    let (nx, ny) = (knn_cross(x, b, k)?, knn_cross(y, b_proj, k)?);
    let n = x.rows();
    let total: usize = (0..n).map(|i| overlap(&nx, &ny, i)).sum();
    Ok(total as f64 / (n as f64 * k as f64))
}

/// Per-sample fraction of `k` nearest neighbors shared between two epochs.
pub fn eval_sem(prev: &Matrix, curr: &Matrix, k: usize) -> Result<Vec<f64>> {
    check_aligned("eval_sem", prev, curr)?;
    let (a, b) = (build_knn(prev, k)?, build_knn(curr, k)?);
    Ok((0..prev.rows()).map(|i| overlap(&a, &b, i) as f64 / k as f64).collect())
}

/// Euclidean distance travelled by each row between two embeddings.
pub fn displacement(prev: &Matrix, curr: &Matrix) -> Result<Vec<f64>> {
    if prev.shape() != curr.shape() {
        return Err(Error::Dimension { op: "displacement", expected: prev.shape(), found: curr.shape() });
    }
    Ok(prev
        .iter_rows()
        .zip(curr.iter_rows())
        .map(|(a, b)| libm::sqrt(crate::numerics::squared_distance(a, b)))
        .collect())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { op: "pearson", expected: (x.len(), 1), found: (y.len(), 1) });
    }
    if x.len() < 3 {
        return Err(precondition("correlation needs at least three observations"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::DegenerateInput("correlation of a constant series is undefined"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Correlation between neighborhood stability and movement in the plane.
pub fn temporal_pv(sem: &[f64], displacement: &[f64]) -> Result<f64> {
    pearson(sem, displacement)
}

/// Fraction of rows whose predicted class survives reconstruction.
pub fn prediction_preserving_rate(ckpt: &SubjectCheckpoint, reps: &Matrix, reconstructed: &Matrix) -> Result<f64> {
    check_aligned("ppr", reps, reconstructed)?;
    let a = ckpt.logits(reps)?;
    let b = ckpt.logits(reconstructed)?;
    let same = a.iter_rows().zip(b.iter_rows()).filter(|(p, q)| argmax(p) == argmax(q)).count();
    Ok(same as f64 / reps.rows().max(1) as f64)
}

pub fn ppr<P: Projector + ?Sized>(ckpt: &SubjectCheckpoint, model: &P, reps: &Matrix) -> Result<f64> {
    let rec = model.reconstruct(&model.project(reps)?)?;
    prediction_preserving_rate(ckpt, reps, &rec)
}

/// Mean squared reconstruction error over all entries.
pub fn reconstruction_error(reps: &Matrix, reconstructed: &Matrix) -> Result<f64> {
    if reps.shape() != reconstructed.shape() {
        return Err(Error::Dimension { op: "reconstruction_error", expected: reps.shape(), found: reconstructed.shape() });
    }
    let count = (reps.rows() * reps.cols()).max(1) as f64;
    let total: f64 = reps
        .as_slice()
        .iter()
        .zip(reconstructed.as_slice())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(total / count)
}

const PCA_MAX_ITERATIONS: usize = 1000;
const PCA_TOLERANCE: f64 = 1e-12;

/// Linear two-component baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBaseline {
    pub mean: Vec<f32>,
    /// h×2, columns are the principal axes.
    pub axes: Matrix,
    pub explained_variance: [f64; 2],
}

fn mat_vec(c: &[f64], h: usize, v: &[f64]) -> Vec<f64> {
    (0..h).map(|r| c[r * h..(r + 1) * h].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn remove_component(v: &mut [f64], axis: &[f64]) {
    let d: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(axis).for_each(|(x, a)| *x -= d * a);
}

impl PcaBaseline {
    /// Top two covariance eigenvectors by power iteration with deflation.
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, h) = x.shape();
        if n < 3 {
            return Err(precondition("PCA needs at least three samples"));
        }
        if h < 2 {
            return Err(precondition("PCA to two components needs at least two dimensions"));
        }
        let mut mean = alloc::vec![0.0f64; h];
        for row in x.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v as f64);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = alloc::vec![0.0f64; h * h];
        let mut centered = alloc::vec![0.0f64; h];
        for row in x.iter_rows() {
            centered.iter_mut().zip(row.iter().zip(&mean)).for_each(|(c, (&v, m))| *c = v as f64 - m);
            for r in 0..h {
                let cr = centered[r];
                for c in r..h {
                    cov[r * h + c] += cr * centered[c];
                }
            }
        }
        for r in 0..h {
            for c in r..h {
                let v = cov[r * h + c] / (n - 1) as f64;
                cov[r * h + c] = v;
                cov[c * h + r] = v;
            }
        }
        let trace: f64 = (0..h).map(|i| cov[i * h + i]).sum();

        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(2);
        let mut values = [0.0f64; 2];
        for component in 0..2 {
            // deterministic start that is not orthogonal to any axis in general position
            let mut v: Vec<f64> = (0..h).map(|i| 1.0 + 0.1 * i as f64).collect();
            for a in &axes {
                remove_component(&mut v, a);
            }
            normalize(&mut v);
            let mut rayleigh = f64::NAN;
            let mut converged = false;
            for _ in 0..PCA_MAX_ITERATIONS {
                let mut w = mat_vec(&cov, h, &v);
                for (a, &lam) in axes.iter().zip(&values[..component]) {
                    // deflation: C − λ a aᵀ applied to v
                    let d: f64 = a.iter().zip(&v).map(|(p, q)| p * q).sum();
                    w.iter_mut().zip(a).for_each(|(x, ai)| *x -= lam * d * ai);
                    remove_component(&mut w, a);
                }
                let next: f64 = w.iter().zip(&v).map(|(p, q)| p * q).sum();
                if normalize(&mut w) == 0.0 {
                    // v lies in the null space; any orthogonal unit vector is an eigenvector
                    converged = true;
                    rayleigh = 0.0;
                    break;
                }
                v = w;
                if (next - rayleigh).abs() <= PCA_TOLERANCE * next.abs().max(1e-300) {
                    rayleigh = next;
                    converged = true;
                    break;
                }
                rayleigh = next;
            }
            if !converged {
                return Err(Error::Convergence { what: "PCA power iteration", iterations: PCA_MAX_ITERATIONS });
            }
            values[component] = rayleigh.max(0.0);
            axes.push(v);
        }

        let mut axis_matrix = Matrix::zeros(h, 2);
        for (c, a) in axes.iter().enumerate() {
            for (r, &v) in a.iter().enumerate() {
                axis_matrix.as_mut_slice()[r * 2 + c] = v as f32;
            }
        }
        let explained = if trace > 0.0 { [values[0] / trace, values[1] / trace] } else { [0.0, 0.0] };
        Ok(PcaBaseline {
            mean: mean.iter().map(|&m| m as f32).collect(),
            axes: axis_matrix,
            explained_variance: explained,
        })
    }
}

impl Projector for PcaBaseline {
    fn project(&self, reps: &Matrix) -> Result<Matrix> {
        if reps.cols() != self.mean.len() {
            return Err(Error::Dimension { op: "pca project", expected: (reps.rows(), self.mean.len()), found: reps.shape() });
        }
        let mut centered = reps.clone();
        for r in 0..centered.rows() {
            centered.row_mut(r).iter_mut().zip(&self.mean).for_each(|(v, m)| *v -= m);
        }
        centered.matmul(&self.axes)
    }

    fn reconstruct(&self, points: &Matrix) -> Result<Matrix> {
        let mut out = points.matmul_transpose(&self.axes)?;
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        }
        Ok(out)
    }
}

/// A metric value at one neighbor count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub nn_pv: Vec<AtK>,
    pub boundary_pv: Vec<AtK>,
    pub rec_pv: f64,
    pub ppr: f64,
}

/// Correlation for one consecutive epoch pair. `None` when either series is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalAtK {
    pub k: usize,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalMetrics {
    pub from_epoch: usize,
    pub to_epoch: usize,
    pub split: Split,
    pub temporal_pv: Vec<TemporalAtK>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub epochs: Vec<EpochMetrics>,
    pub temporal: Vec<TemporalMetrics>,
}

impl MethodMetrics {
    pub fn epoch(&self, epoch: usize, split: Split) -> Option<&EpochMetrics> {
        self.epochs.iter().find(|e| e.epoch == epoch && e.split == split)
    }

    /// Mean temporal_pv over the defined epoch pairs of `split`.
    pub fn temporal_mean(&self, split: Split, k: usize) -> Option<f64> {
        let values: Vec<f64> = self
            .temporal
            .iter()
            .filter(|t| t.split == split)
            .filter_map(|t| t.temporal_pv.iter().find(|v| v.k == k).and_then(|v| v.value))
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub methods: Vec<MethodMetrics>,
}

impl MetricsReport {
    pub fn method(&self, name: &str) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Aligned plain-text table: spatial columns for the last epoch, then the temporal means.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let last = self.methods.iter().flat_map(|m| m.epochs.iter().map(|e| e.epoch)).max();
        if let Some(t) = last {
            let _ = writeln!(out, "Spatial properties, epoch {t}");
            let mut header = alloc::format!("{:<10} {:<6}", "method", "split");
            for k in &self.ks {
                let _ = write!(header, " {:>9}", alloc::format!("nn@{k}"));
            }
            for k in &self.ks {
                let _ = write!(header, " {:>9}", alloc::format!("bnd@{k}"));
            }
            let _ = write!(header, " {:>9} {:>9}", "rec", "ppr");
            let _ = writeln!(out, "{header}");
            for m in &self.methods {
                for split in [Split::Train, Split::Test] {
                    let Some(e) = m.epoch(t, split) else { continue };
                    let _ = write!(out, "{:<10} {:<6}", m.method, split_name(split));
                    for v in e.nn_pv.iter().chain(&e.boundary_pv) {
                        let _ = write!(out, " {:>9.4}", v.value);
                    }
                    let _ = writeln!(out, " {:>9.4} {:>9.4}", e.rec_pv, e.ppr);
                }
            }
        }
        let temporal: Vec<&MethodMetrics> = self.methods.iter().filter(|m| !m.temporal.is_empty()).collect();
        if !temporal.is_empty() {
            let _ = writeln!(out, "\nTemporal properties (mean over epoch pairs)");
            let mut header = alloc::format!("{:<10} {:<6}", "method", "split");
            for k in &self.ks {
                let _ = write!(header, " {:>9}", alloc::format!("tmp@{k}"));
            }
            let _ = writeln!(out, "{header}");
            for m in temporal {
                for split in [Split::Train, Split::Test] {
                    let _ = write!(out, "{:<10} {:<6}", m.method, split_name(split));
                    for &k in &self.ks {
                        match m.temporal_mean(split, k) {
                            Some(v) => {
                                let _ = write!(out, " {:>9.4}", v);
                            }
                            None => {
                                let _ = write!(out, " {:>9}", "n/a");
                            }
                        }
                    }
                    let _ = writeln!(out);
                }
            }
        }
        out
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

/// Spatial metrics of one projector on one split.
pub fn spatial_metrics<P: Projector + ?Sized>(
    projector: &P,
    ckpt: &SubjectCheckpoint,
    reps: &Matrix,
    boundary: Option<&Matrix>,
    ks: &[usize],
    epoch: usize,
    split: Split,
) -> Result<EpochMetrics> {
    let y = projector.project(reps)?;
    let rec = projector.reconstruct(&y)?;
    let b_proj = match boundary {
        Some(b) => Some(projector.project(b)?),
        None => None,
    };
    let mut nn_pv = Vec::with_capacity(ks.len());
    let mut boundary_pv = Vec::with_capacity(ks.len());
    for &k in ks {
        nn_pv.push(AtK { k, value: nn_preserving(reps, &y, k)? });
        if let (Some(b), Some(bp)) = (boundary, b_proj.as_ref()) {
            boundary_pv.push(AtK { k, value: boundary_preserving(reps, &y, b, bp, k)? });
        }
    }
    Ok(EpochMetrics {
        epoch,
        split,
        nn_pv,
        boundary_pv,
        rec_pv: reconstruction_error(reps, &rec)?,
        ppr: prediction_preserving_rate(ckpt, reps, &rec)?,
    })
}

/// Representations and embedding of one split at one epoch, rows aligned by sample id.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub epoch: usize,
    pub reps: &'a Matrix,
    pub embedding: &'a Matrix,
}

/// temporal_pv for one epoch pair, recording `None` where the correlation is undefined.
pub fn temporal_metrics(prev: Snapshot<'_>, curr: Snapshot<'_>, ks: &[usize], split: Split) -> Result<TemporalMetrics> {
    let disp = displacement(prev.embedding, curr.embedding)?;
    let mut temporal_pv = Vec::with_capacity(ks.len());
    for &k in ks {
        let sem = eval_sem(prev.reps, curr.reps, k)?;
        let value = match self::temporal_pv(&sem, &disp) {
            Ok(v) => Some(v),
            Err(Error::DegenerateInput(_)) => None,
            Err(e) => return Err(e),
        };
        temporal_pv.push(TemporalAtK { k, value });
    }
    Ok(TemporalMetrics { from_epoch: prev.epoch, to_epoch: curr.epoch, split, temporal_pv })
}
