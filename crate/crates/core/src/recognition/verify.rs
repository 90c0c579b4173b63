use std::cmp::Ordering;

use crate::error::{Error, Result};

/// An embedding vector with its identity, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f32>,
    pub label: Option<u32>,
}

impl Embedding {
    pub fn new(vector: Vec<f32>, label: Option<u32>) -> Self {
        Embedding { vector, label }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Cosine similarity, accumulated in f64.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(
            "cosine_similarity",
            format!("{} vs {} dimensions", a.len(), b.len()),
        ));
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 || !(aa.is_finite() && bb.is_finite()) {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Same-identity decision `similarity >= threshold`, with the similarity.
pub fn verify(a: &Embedding, b: &Embedding, threshold: f64) -> Result<(bool, f64)> {
    let s = cosine_similarity(&a.vector, &b.vector)?;
    Ok((s >= threshold, s))
}

/// Threshold maximizing accuracy of `similarity >= t` over scored pairs
/// `(similarity, same)`. Candidates are every observed similarity plus one
/// just above the maximum (reject everything); ties go to the lowest
/// threshold.
pub fn find_best_threshold(pairs: &[(f64, bool)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Input("no verification pairs".into()));
    }
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let n = sorted.len();
    // Threshold at sorted[i].0 accepts sorted[i..] (equal similarities
    // enter together, so only the first index of each run is a candidate).
    let total_same = sorted.iter().filter(|p| p.1).count();
    let mut same_below = 0usize;
    let mut diff_below = 0usize;
    let mut best = (f64::NAN, -1.0f64);
    let mut i = 0;
    while i <= n {
        let t = if i < n {
            sorted[i].0
        } else {
            next_up(sorted[n - 1].0)
        };
        let correct = (total_same - same_below) + diff_below;
        let acc = correct as f64 / n as f64;
        if acc > best.1 {
            best = (t, acc);
        }
        if i == n {
            break;
        }
        let mut j = i;
        while j < n && sorted[j].0 == t {
            if sorted[j].1 {
                same_below += 1;
            } else {
                diff_below += 1;
            }
            j += 1;
        }
        i = j;
    }
    Ok(best)
}

/// Smallest f64 strictly greater than `x` (finite `x`).
pub(crate) fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// Accuracy of a fixed threshold on scored pairs.
pub fn accuracy_at(pairs: &[(f64, bool)], threshold: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = pairs.iter().filter(|&&(s, same)| (s >= threshold) == same).count();
    correct as f64 / pairs.len() as f64
}
