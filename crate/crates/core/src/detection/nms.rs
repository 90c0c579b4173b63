use std::cmp::Ordering;

use super::{iou, BBox};

/// Greedy non-maximum suppression. Returns indices of kept boxes in
/// descending score order; a box is dropped when its IoU with an already
/// kept box is `>= iou_thresh`. Ties in score keep input order.
pub fn nms(boxes: &[BBox], iou_thresh: f32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    let score = |i: usize| boxes[i].score.unwrap_or(0.0);
    order.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap_or(Ordering::Equal));
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        if keep.iter().all(|&k| iou(&boxes[k], &boxes[i]) < iou_thresh) {
            keep.push(i);
        }
    }
    keep
}
