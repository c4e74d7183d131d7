use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Maps the minimum to 0 and the maximum to 1, linearly in between.
pub fn minmax_rescale(logits: &[f32]) -> Result<Vec<f32>> {
    if logits.len() < 2 {
        return Err(Error::DegenerateInput("min-max rescaling needs at least two values"));
    }
    let (lo, hi) = logits.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) || !(hi - lo).is_finite() {
        return Err(Error::DegenerateInput("min-max rescaling of a constant vector"));
    }
    let span = hi - lo;
    Ok(logits
        .iter()
        .map(|&v| {
            if v == hi {
                1.0
            } else {
                (v - lo) / span
            }
        })
        .collect())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().fold(f32::NEG_INFINITY, |acc, &v| acc.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| libm::exp((v - m) as f64)).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / total) as f32).collect()
}

/// Indices of the largest and second-largest entries; ties go to the lower index.
pub fn top2(values: &[f32]) -> Option<(usize, usize)> {
    if values.len() < 2 {
        return None;
    }
    let mut first = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[first] {
            first = i;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for (i, &v) in values.iter().enumerate() {
        if i != first && v > values[second] {
            second = i;
        }
    }
    Some((first, second))
}

/// Index of the largest entry, lower index on ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
