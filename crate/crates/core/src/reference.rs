//! Slow, direct implementations used as test oracles for the optimized
//! kernels. Each one follows the textbook definition with no shortcuts.

use crate::tensor::{Real, Tensor};

/// Direct cross-correlation: `y = b + sum_c sum_i sum_j x * w`, zero padded.
pub fn conv2d_nested<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (k, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut y = Tensor::zeros(&[n, k, oh, ow]);
    for bn in 0..n {
        for f in 0..k {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[f];
                    for ch in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let yy = (oy * stride + i) as isize - pad as isize;
                                let xx = (ox * stride + j) as isize - pad as isize;
                                if yy < 0 || xx < 0 || yy >= h as isize || xx >= wd as isize {
                                    continue;
                                }
                                let xi = ((bn * c + ch) * h + yy as usize) * wd + xx as usize;
                                let wi = ((f * c + ch) * kh + i) * kw + j;
                                acc += w.data()[wi] * x.data()[xi];
                            }
                        }
                    }
                    y.data_mut()[((bn * k + f) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    y
}

/// Bilinear sampling as the full double sum over every source pixel:
/// `V = sum_n sum_m U[n, m] max(0, 1 - |x - m|) max(0, 1 - |y - n|)`.
pub fn bilinear_full<T: Real>(u: &Tensor<T>, coords: &[(T, T)], out: (usize, usize)) -> Tensor<T> {
    let (r, c, h, w) = (u.shape()[0], u.shape()[1], u.shape()[2], u.shape()[3]);
    let (ho, wo) = out;
    assert_eq!(coords.len(), r * ho * wo);
    let mut v = Tensor::zeros(&[r, c, ho, wo]);
    let kernel = |s: T, p: usize| (T::one() - (s - T::of(p as f64)).abs()).max(T::zero());
    for reg in 0..r {
        for ch in 0..c {
            for p in 0..ho * wo {
                let (xs, ys) = coords[reg * ho * wo + p];
                let mut acc = T::zero();
                for n in 0..h {
                    for m in 0..w {
                        let val = u.data()[((reg * c + ch) * h + n) * w + m];
                        acc += val * kernel(xs, m) * kernel(ys, n);
                    }
                }
                v.data_mut()[(reg * c + ch) * ho * wo + p] = acc;
            }
        }
    }
    v
}

/// Non-maximum suppression by repeated selection: take the highest-scoring
/// live box (lowest index on ties), then kill every live box overlapping it
/// by at least `iou_thresh`.
pub fn nms_brute(boxes: &[crate::detection::BBox], iou_thresh: f32) -> Vec<usize> {
    let mut alive = vec![true; boxes.len()];
    let mut keep = Vec::new();
    loop {
        let mut pick: Option<usize> = None;
        for i in 0..boxes.len() {
            let s = boxes[i].score.unwrap_or(0.0);
            if alive[i] && pick.is_none_or(|p| s > boxes[p].score.unwrap_or(0.0)) {
                pick = Some(i);
            }
        }
        let Some(p) = pick else { return keep };
        keep.push(p);
        alive[p] = false;
        for i in 0..boxes.len() {
            if alive[i] && crate::detection::iou(&boxes[p], &boxes[i]) >= iou_thresh {
                alive[i] = false;
            }
        }
    }
}

/// Recall and precision at every distinct score threshold, rematching the
/// surviving detections of each image from scratch.
pub fn detection_sweep_brute(
    images: &[(Vec<crate::detection::BBox>, Vec<crate::detection::BBox>)],
    iou: f32,
) -> Vec<(f32, f64, f64)> {
    let mut thresholds: Vec<f32> =
        images.iter().flat_map(|(d, _)| d.iter().map(|b| b.score.unwrap_or(f32::NEG_INFINITY))).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let total_gt: usize = images.iter().map(|(_, g)| g.len()).sum();
    thresholds
        .into_iter()
        .map(|t| {
            let (mut tp, mut n) = (0usize, 0usize);
            for (dets, gts) in images {
                let kept: Vec<_> =
                    dets.iter().filter(|d| d.score.unwrap_or(f32::NEG_INFINITY) >= t).cloned().collect();
                n += kept.len();
                tp += match_brute(&kept, gts, iou);
            }
            let recall = if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 };
            let precision = if n == 0 { 0.0 } else { tp as f64 / n as f64 };
            (t, recall, precision)
        })
        .collect()
}

/// Greedy matching count: repeatedly take the highest-scoring unused
/// detection and give it its best unused ground truth above `iou`.
fn match_brute(dets: &[crate::detection::BBox], gts: &[crate::detection::BBox], iou: f32) -> usize {
    let mut used_d = vec![false; dets.len()];
    let mut used_g = vec![false; gts.len()];
    let mut tp = 0;
    for _ in 0..dets.len() {
        let mut pick: Option<usize> = None;
        for i in 0..dets.len() {
            if !used_d[i] && pick.is_none_or(|p| dets[i].score > dets[p].score) {
                pick = Some(i);
            }
        }
        let p = pick.expect("an unused detection remains");
        used_d[p] = true;
        let mut best: Option<(usize, f32)> = None;
        for g in 0..gts.len() {
            let o = crate::detection::iou(&dets[p], &gts[g]);
            if !used_g[g] && o >= iou && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            used_g[g] = true;
            tp += 1;
        }
    }
    tp
}

/// Best accuracy of `similarity >= t` over every observed similarity and
/// `+inf`, trying each threshold independently.
pub fn best_threshold_brute(pairs: &[(f64, bool)]) -> f64 {
    let mut cands: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    cands.push(f64::INFINITY);
    cands
        .into_iter()
        .map(|t| pairs.iter().filter(|&&(s, same)| (s >= t) == same).count() as f64 / pairs.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}
