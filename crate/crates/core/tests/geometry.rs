use facestn::data::{stitch_with, unstitch_boxes, GridLayout, Sample};
use facestn::detection::{decode, encode, iou, nms, BBox};
use facestn::eval::detection_sweep;
use facestn::recognition::find_best_threshold;
use facestn::reference::{best_threshold_brute, detection_sweep_brute, nms_brute};
use facestn::Tensor;
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0f32..200.0, 0.0f32..200.0, 1.0f32..80.0, 1.0f32..80.0)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
}

fn sized_box(min: f32) -> impl Strategy<Value = BBox> {
    (0.0f32..200.0, 0.0f32..200.0, min..80.0, min..80.0).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
}

fn scored_boxes(max: usize) -> impl Strategy<Value = Vec<BBox>> {
    // Scores on a coarse lattice so ties actually occur.
    prop::collection::vec((bbox(), 0u8..8), 0..max)
        .prop_map(|v| v.into_iter().map(|(b, s)| b.with_score(f32::from(s) / 8.0)).collect())
}

/// A box on the 1/64 pixel lattice, strictly inside a `size` tile.
fn lattice_box(size: usize) -> impl Strategy<Value = BBox> {
    let n = (size * 64) as u32;
    (0..n - 64, 0..n - 64, 64u32..n, 64u32..n).prop_map(move |(x, y, w, h)| {
        let q = |v: u32| v as f32 / 64.0;
        let x2 = (x + w).min(n - 1);
        let y2 = (y + h).min(n - 1);
        BBox::new(q(x), q(y), q(x2.max(x + 1)), q(y2.max(y + 1)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-6);
    }

    // Size ratios stay inside the decoder's log-delta clamp.
    #[test]
    fn delta_round_trip(gt in sized_box(2.0), anchor in sized_box(2.0)) {
        let back = decode(&encode(&gt, &anchor), &anchor);
        for (u, v) in [(back.x1, gt.x1), (back.y1, gt.y1), (back.x2, gt.x2), (back.y2, gt.y2)] {
            prop_assert!((u - v).abs() <= 1e-4 * v.abs().max(1.0), "{back:?} vs {gt:?}");
        }
    }

    #[test]
    fn nms_matches_brute_force(boxes in scored_boxes(40), t in 0.05f32..0.95) {
        prop_assert_eq!(nms(&boxes, t), nms_brute(&boxes, t));
    }

    #[test]
    fn sweep_matches_rematching_at_each_threshold(
        images in prop::collection::vec((scored_boxes(8), prop::collection::vec(bbox(), 0..5)), 1..5)
    ) {
        let fast = detection_sweep(&images, 0.5);
        let slow = detection_sweep_brute(&images, 0.5);
        prop_assert_eq!(fast.sweep.len(), slow.len());
        for (p, (t, r, pr)) in fast.sweep.iter().zip(&slow) {
            prop_assert_eq!(p.threshold, *t);
            prop_assert_eq!(p.recall, *r);
            prop_assert_eq!(p.precision, *pr);
        }
        for p in &fast.sweep {
            prop_assert!(fast.best.f1 >= p.f1);
        }
    }

    #[test]
    fn best_threshold_matches_exhaustive_search(
        pairs in prop::collection::vec((0u8..20, any::<bool>()), 1..40)
    ) {
        let pairs: Vec<(f64, bool)> = pairs.into_iter().map(|(s, b)| (f64::from(s) / 10.0 - 1.0, b)).collect();
        let (t, acc) = find_best_threshold(&pairs).unwrap();
        prop_assert_eq!(acc, best_threshold_brute(&pairs));
        let direct = pairs.iter().filter(|&&(s, same)| (s >= t) == same).count() as f64 / pairs.len() as f64;
        prop_assert_eq!(acc, direct);
    }

    #[test]
    fn stitch_unstitch_is_exact(
        rows in 1usize..4,
        cols in 1usize..5,
        boxes in prop::collection::vec(lattice_box(24), 12),
    ) {
        let layout = GridLayout { rows, cols, tile_h: 24, tile_w: 24 };
        let tiles: Vec<Sample> = (0..layout.tiles())
            .map(|k| Sample {
                image: Tensor::full(&[3, 24, 24], k as f32 / 12.0),
                boxes: vec![boxes[k]],
                identities: vec![Some(k as u32)],
            })
            .collect();
        let stitched = stitch_with(layout, &tiles).unwrap();
        prop_assert_eq!(stitched.size(), layout.size());
        let back = unstitch_boxes(layout, &stitched.boxes);
        prop_assert_eq!(back.len(), tiles.len());
        for (k, b) in back {
            prop_assert_eq!(b, tiles[k].boxes[0]);
            prop_assert_eq!(stitched.identities[k], Some(k as u32));
        }
    }
}

#[test]
fn standard_layout_is_twelve_tiles_in_three_rows() {
    let l = GridLayout::STANDARD;
    assert_eq!((l.rows, l.cols, l.tiles()), (3, 4, 12));
    assert_eq!(l.size(), (750, 1000));
}
