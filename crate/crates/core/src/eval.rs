//! Detection recall under greedy IoU matching and pair verification accuracy.

use std::cmp::Ordering;
use std::time::Instant;

use crate::data::{FaceRef, Pair, Sample, SyntheticWorld};
use crate::detection::BBox;
use crate::error::{Error, Result};
use crate::model::FaceNet;
use crate::recognition::{accuracy_at, cosine_similarity, find_best_threshold, Embedding};

/// Overlap needed for a detection to count as finding a face.
pub const MATCH_IOU: f32 = 0.5;

/// Greedy matching in descending score order: each detection takes the
/// unmatched ground truth it overlaps most, if that overlap reaches `iou`.
/// Returns the matched ground-truth index per detection.
pub fn match_detections(dets: &[BBox], gts: &[BBox], iou: f32) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| by_score_desc(&dets[a], &dets[b]));
    let mut taken = vec![false; gts.len()];
    let mut out = vec![None; dets.len()];
    for i in order {
        let mut best: Option<(usize, f32)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let o = dets[i].iou(gt);
            if o >= iou && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            out[i] = Some(g);
        }
    }
    out
}

fn by_score_desc(a: &BBox, b: &BBox) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal)
}

/// Detection quality when keeping detections scoring at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f32,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub images: usize,
    pub total_gt: usize,
    /// One point per distinct detection score, highest threshold first.
    pub sweep: Vec<OperatingPoint>,
    /// Highest F1; ties go to the higher recall.
    pub best: OperatingPoint,
}

impl DetectionReport {
    /// Recall with every detection kept.
    pub fn max_recall(&self) -> f64 {
        self.sweep.last().map_or(0.0, |p| p.recall)
    }
}

/// Sweep score thresholds over per-image `(detections, ground truth)`.
pub fn detection_sweep(images: &[(Vec<BBox>, Vec<BBox>)], iou: f32) -> DetectionReport {
    let mut scored: Vec<(f32, bool)> = Vec::new();
    let mut total_gt = 0;
    for (dets, gts) in images {
        total_gt += gts.len();
        let m = match_detections(dets, gts, iou);
        scored.extend(dets.iter().zip(&m).map(|(d, m)| (d.score.unwrap_or(f32::NEG_INFINITY), m.is_some())));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let point = |threshold: f32, tp: usize, n: usize| {
        let recall = if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 };
        let precision = if n == 0 { 0.0 } else { tp as f64 / n as f64 };
        let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        OperatingPoint {
            threshold,
            recall,
            precision,
            f1,
            detections: n,
        }
    };
    let mut sweep = Vec::new();
    let mut tp = 0;
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            tp += usize::from(scored[i].1);
            i += 1;
        }
        sweep.push(point(t, tp, i));
    }
    let mut best = point(f32::INFINITY, 0, 0);
    for p in &sweep {
        if p.f1 > best.f1 || (p.f1 == best.f1 && p.recall > best.recall) {
            best = *p;
        }
    }
    DetectionReport {
        images: images.len(),
        total_gt,
        sweep,
        best,
    }
}

/// Run the detector over labelled images.
pub fn evaluate_detection(net: &FaceNet, samples: &[Sample]) -> Result<DetectionReport> {
    let mut images = Vec::with_capacity(samples.len());
    for s in samples {
        let dets = net.detect(&s.image)?.boxes;
        images.push((dets, s.boxes.clone()));
    }
    Ok(detection_sweep(&images, MATCH_IOU))
}

/// Where recognition reads a face from in a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceCrop {
    /// The best-scoring detection, or the whole tile when there is none.
    Detected,
    /// The annotated box.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Chosen on the validation pairs.
    pub threshold: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub test_pairs: usize,
    /// Mean seconds to detect (when applicable) and embed one face.
    pub seconds_per_face: f64,
    /// Mean seconds of the embedding pass alone.
    pub feature_seconds_per_face: f64,
    /// Faces where no detection was found and the whole tile was used.
    pub fallbacks: usize,
}

/// Embeds faces for verification, caching by face.
pub struct FaceEmbedder<'a> {
    net: &'a FaceNet,
    world: &'a SyntheticWorld,
    crop: FaceCrop,
    cache: std::collections::HashMap<FaceRef, Embedding>,
    seconds: f64,
    feature_seconds: f64,
    fallbacks: usize,
}

impl<'a> FaceEmbedder<'a> {
    pub fn new(net: &'a FaceNet, world: &'a SyntheticWorld, crop: FaceCrop) -> Self {
        FaceEmbedder {
            net,
            world,
            crop,
            cache: Default::default(),
            seconds: 0.0,
            feature_seconds: 0.0,
            fallbacks: 0,
        }
    }

    pub fn embed(&mut self, f: FaceRef) -> Result<Embedding> {
        if let Some(e) = self.cache.get(&f) {
            return Ok(e.clone());
        }
        let sample = self.world.face(f)?;
        let start = Instant::now();
        let (h, w) = sample.size();
        let b = match self.crop {
            FaceCrop::GroundTruth => sample.boxes[0],
            FaceCrop::Detected => match self.net.detect(&sample.image)?.boxes.first() {
                Some(b) => *b,
                None => {
                    self.fallbacks += 1;
                    BBox::new(0.0, 0.0, w as f32, h as f32)
                }
            },
        };
        let feature_start = Instant::now();
        let emb = self.net.embed(&sample.image, &[b])?;
        self.feature_seconds += feature_start.elapsed().as_secs_f64();
        self.seconds += start.elapsed().as_secs_f64();
        let e = Embedding::new(emb.data().to_vec(), Some(f.identity));
        self.cache.insert(f, e.clone());
        Ok(e)
    }

    pub fn embedded(&self) -> usize {
        self.cache.len()
    }

    /// Every embedded face, ordered by identity then instance.
    pub fn embeddings(&self) -> Vec<(FaceRef, Embedding)> {
        let mut v: Vec<_> = self.cache.iter().map(|(f, e)| (*f, e.clone())).collect();
        v.sort_by_key(|(f, _)| (f.identity, f.instance));
        v
    }

    pub fn scored(&mut self, pairs: &[Pair]) -> Result<Vec<(f64, bool)>> {
        pairs
            .iter()
            .map(|p| {
                let a = self.embed(p.a)?;
                let b = self.embed(p.b)?;
                let s = cosine_similarity(&a.vector, &b.vector).or_else(|e| match e {
                    // A dead embedding matches nothing.
                    Error::UndefinedSimilarity => Ok(-1.0),
                    e => Err(e),
                })?;
                Ok((s, p.same))
            })
            .collect()
    }
}

/// Threshold from the validation pairs, accuracy on the test pairs.
pub fn evaluate_verification(
    net: &FaceNet,
    world: &SyntheticWorld,
    crop: FaceCrop,
) -> Result<VerificationReport> {
    verification_with(&mut FaceEmbedder::new(net, world, crop))
}

/// [`evaluate_verification`] with a caller-owned embedder, whose cache then
/// holds every evaluated face.
pub fn verification_with(emb: &mut FaceEmbedder) -> Result<VerificationReport> {
    let split = emb.world.split();
    let val = emb.scored(&split.val_pairs)?;
    let test = emb.scored(&split.test_pairs)?;
    let (threshold, val_accuracy) = find_best_threshold(&val)?;
    Ok(VerificationReport {
        threshold,
        val_accuracy,
        test_accuracy: accuracy_at(&test, threshold),
        test_pairs: test.len(),
        seconds_per_face: emb.seconds / emb.embedded().max(1) as f64,
        feature_seconds_per_face: emb.feature_seconds / emb.embedded().max(1) as f64,
        fallbacks: emb.fallbacks,
    })
}
