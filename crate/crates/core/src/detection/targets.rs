//! Training-target assignment for the proposal network and the box head.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{encode, iou, BBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RpnTargetConfig {
    /// Anchors with IoU at or above this are positive.
    pub pos_iou: f32,
    /// Anchors whose best IoU is below this are negative.
    pub neg_iou: f32,
    /// Anchors sampled per image.
    pub batch_size: usize,
    pub fg_fraction: f32,
}

impl Default for RpnTargetConfig {
    fn default() -> Self {
        RpnTargetConfig {
            pos_iou: 0.7,
            neg_iou: 0.3,
            batch_size: 300,
            fg_fraction: 0.5,
        }
    }
}

/// Per-anchor labels: `1` positive, `0` negative, `-1` ignored.
#[derive(Debug, Clone)]
pub struct RpnTargets {
    pub labels: Vec<i8>,
    /// Regression targets; meaningful only where `labels == 1`.
    pub deltas: Vec<[f32; 4]>,
}

impl RpnTargets {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }
}

fn check_fraction(key: &str, v: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Input(format!("{key} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Label anchors against ground truth. Every ground-truth box keeps at least
/// one positive anchor (its best match) whenever anchors exist, even through
/// subsampling.
pub fn assign_rpn_targets(
    anchors: &[BBox],
    gts: &[BBox],
    cfg: &RpnTargetConfig,
    rng: &mut impl Rng,
) -> Result<RpnTargets> {
    check_fraction("pos_iou", cfg.pos_iou)?;
    check_fraction("neg_iou", cfg.neg_iou)?;
    check_fraction("fg_fraction", cfg.fg_fraction)?;
    if cfg.neg_iou > cfg.pos_iou {
        return Err(Error::Input(format!(
            "neg_iou {} exceeds pos_iou {}",
            cfg.neg_iou, cfg.pos_iou
        )));
    }
    let n = anchors.len();
    let mut labels = vec![-1i8; n];
    let mut deltas = vec![[0.0f32; 4]; n];
    let mut best_gt = vec![0usize; n];
    let mut best_iou = vec![0.0f32; n];
    let mut gt_best = vec![0.0f32; gts.len()];
    let mut gt_best_anchor = vec![None; gts.len()];
    for (a, anchor) in anchors.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(anchor, gt);
            if v > best_iou[a] {
                best_iou[a] = v;
                best_gt[a] = g;
            }
            if v > gt_best[g] || gt_best_anchor[g].is_none() {
                gt_best[g] = v;
                gt_best_anchor[g] = Some(a);
            }
        }
    }
    for a in 0..n {
        if best_iou[a] < cfg.neg_iou {
            labels[a] = 0;
        }
        if best_iou[a] >= cfg.pos_iou {
            labels[a] = 1;
        }
    }
    // Best anchor per ground truth is positive regardless of threshold, and
    // anchors tied with it are positive too.
    let mut protected = Vec::new();
    for (g, anchor) in gt_best_anchor.iter().enumerate() {
        let Some(a) = *anchor else { continue };
        labels[a] = 1;
        best_gt[a] = g;
        protected.push(a);
        if gt_best[g] > 0.0 {
            for (b, other) in anchors.iter().enumerate() {
                if labels[b] != 1 && iou(other, &gts[g]) == gt_best[g] {
                    labels[b] = 1;
                    best_gt[b] = g;
                }
            }
        }
    }
    protected.sort_unstable();
    protected.dedup();

    let max_fg = ((cfg.batch_size as f32 * cfg.fg_fraction) as usize).max(protected.len());
    let mut pos: Vec<usize> = (0..n)
        .filter(|&a| labels[a] == 1 && protected.binary_search(&a).is_err())
        .collect();
    let room = max_fg - protected.len();
    if pos.len() > room {
        pos.shuffle(rng);
        for &a in &pos[room..] {
            labels[a] = -1;
        }
    }
    let num_pos = labels.iter().filter(|&&l| l == 1).count();
    let max_bg = cfg.batch_size.saturating_sub(num_pos);
    let mut neg: Vec<usize> = (0..n).filter(|&a| labels[a] == 0).collect();
    if neg.len() > max_bg {
        neg.shuffle(rng);
        for &a in &neg[max_bg..] {
            labels[a] = -1;
        }
    }
    for a in 0..n {
        if labels[a] == 1 {
            deltas[a] = encode(&gts[best_gt[a]], &anchors[a]);
        }
    }
    Ok(RpnTargets { labels, deltas })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiSampleConfig {
    pub rois_per_image: usize,
    pub fg_fraction: f32,
    /// Proposals with IoU at or above this are faces.
    pub fg_iou: f32,
    /// Background proposals have IoU in `[bg_lo, bg_hi)`.
    pub bg_hi: f32,
    pub bg_lo: f32,
}

impl Default for RoiSampleConfig {
    fn default() -> Self {
        RoiSampleConfig {
            rois_per_image: 64,
            fg_fraction: 0.25,
            fg_iou: 0.5,
            bg_hi: 0.5,
            bg_lo: 0.0,
        }
    }
}

/// Regions chosen to train the box head.
#[derive(Debug, Clone, Default)]
pub struct RoiBatch {
    pub boxes: Vec<BBox>,
    /// `1` face, `0` background.
    pub labels: Vec<usize>,
    /// Regression targets; meaningful only for faces.
    pub deltas: Vec<[f32; 4]>,
}

/// Sample foreground and background regions from proposals, with the
/// ground-truth boxes themselves added to the candidate pool.
pub fn sample_rois(
    proposals: &[BBox],
    gts: &[BBox],
    cfg: &RoiSampleConfig,
    rng: &mut impl Rng,
) -> RoiBatch {
    let pool: Vec<BBox> = proposals.iter().chain(gts).copied().collect();
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    let mut matched = vec![0usize; pool.len()];
    for (p, b) in pool.iter().enumerate() {
        let mut best = 0.0f32;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(b, gt);
            if v > best {
                best = v;
                matched[p] = g;
            }
        }
        if best >= cfg.fg_iou {
            fg.push(p);
        } else if best < cfg.bg_hi && best >= cfg.bg_lo {
            bg.push(p);
        }
    }
    let fg_quota = (cfg.rois_per_image as f32 * cfg.fg_fraction).round() as usize;
    fg.shuffle(rng);
    fg.truncate(fg_quota);
    bg.shuffle(rng);
    bg.truncate(cfg.rois_per_image - fg.len());
    let mut batch = RoiBatch::default();
    for &p in &fg {
        batch.boxes.push(pool[p]);
        batch.labels.push(1);
        batch.deltas.push(encode(&gts[matched[p]], &pool[p]));
    }
    for &p in &bg {
        batch.boxes.push(pool[p]);
        batch.labels.push(0);
        batch.deltas.push([0.0; 4]);
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{generate_anchors, AnchorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_face_still_gets_positive() {
        let anchors = generate_anchors(&AnchorConfig::default(), 6, 6);
        let gt = [BBox::new(10.0, 10.0, 14.0, 14.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = assign_rpn_targets(&anchors, &gt, &RpnTargetConfig::default(), &mut rng).unwrap();
        assert!(t.positives() >= 1);
        assert!(t.positives() + t.negatives() <= 300);
    }

    #[test]
    fn no_faces_means_all_sampled_negative() {
        let anchors = generate_anchors(&AnchorConfig::default(), 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = assign_rpn_targets(&anchors, &[], &RpnTargetConfig::default(), &mut rng).unwrap();
        assert_eq!(t.positives(), 0);
        assert_eq!(t.negatives(), anchors.len().min(300));
    }

    #[test]
    fn inverted_thresholds_rejected() {
        let cfg = RpnTargetConfig {
            pos_iou: 0.3,
            neg_iou: 0.7,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(assign_rpn_targets(&[], &[], &cfg, &mut rng).is_err());
    }

    #[test]
    fn roi_sampling_includes_ground_truth() {
        let gt = [BBox::new(0.0, 0.0, 20.0, 20.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_rois(&[BBox::new(40.0, 40.0, 60.0, 60.0)], &gt, &RoiSampleConfig::default(), &mut rng);
        assert_eq!(batch.labels, vec![1, 0]);
        assert_eq!(batch.deltas[0], [0.0; 4]);
    }
}
