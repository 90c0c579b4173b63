//! Axis-aligned boxes in continuous pixel coordinates (`x2 - x1` is the width).

/// Largest log-scale delta applied when decoding, `ln(1000 / 16)`.
const MAX_LOG_DELTA: f32 = 4.135_166_6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
    pub score: Option<f32>,
    pub label: Option<u32>,
}

impl BBox {
    pub fn new(x1: f32, y1: f32, x2: f32, y2: f32) -> Self {
        BBox {
            x1,
            y1,
            x2,
            y2,
            score: None,
            label: None,
        }
    }

    pub fn from_center(cx: f32, cy: f32, w: f32, h: f32) -> Self {
        BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn with_score(mut self, score: f32) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.label = Some(label);
        self
    }

    pub fn width(&self) -> f32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f32 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f32, f32) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    /// Clip to `[0, width] x [0, height]`.
    pub fn clip(&self, width: f32, height: f32) -> BBox {
        BBox {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
            ..*self
        }
    }

    pub fn translate(&self, dx: f32, dy: f32) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
            ..*self
        }
    }

    pub fn iou(&self, other: &BBox) -> f32 {
        iou(self, other)
    }
}

/// Intersection over union; 0 when either box is empty.
pub fn iou(a: &BBox, b: &BBox) -> f32 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0) as f64;
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0) as f64;
    let inter = iw * ih;
    let union = a.area() as f64 + b.area() as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0) as f32
    }
}

/// Standard `(dx, dy, dw, dh)` parameterization of `gt` relative to `anchor`.
pub fn encode(gt: &BBox, anchor: &BBox) -> [f32; 4] {
    let (gx, gy) = gt.center();
    let (ax, ay) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    [
        (gx - ax) / aw,
        (gy - ay) / ah,
        (gt.width() / aw).ln(),
        (gt.height() / ah).ln(),
    ]
}

pub fn decode(deltas: &[f32; 4], anchor: &BBox) -> BBox {
    let (ax, ay) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = ax + deltas[0] * aw;
    let cy = ay + deltas[1] * ah;
    let w = aw * deltas[2].min(MAX_LOG_DELTA).exp();
    let h = ah * deltas[3].min(MAX_LOG_DELTA).exp();
    BBox::from_center(cx, cy, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_basics() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(2.0, 2.0, 3.0, 3.0)), 0.0);
        let half = BBox::new(0.5, 0.0, 1.5, 1.0);
        assert!((iou(&a, &half) - 1.0 / 3.0).abs() < 1e-7);
        assert_eq!(iou(&a, &half), iou(&half, &a));
    }

    #[test]
    fn identical_box_encodes_to_zero() {
        let a = BBox::new(3.0, 4.0, 20.0, 31.0);
        assert_eq!(encode(&a, &a), [0.0, 0.0, 0.0, 0.0]);
        let d = decode(&[0.0; 4], &a);
        assert_eq!((d.x1, d.y1, d.x2, d.y2), (3.0, 4.0, 20.0, 31.0));
    }

    #[test]
    fn clip_stays_in_bounds() {
        let b = BBox::new(-5.0, 3.0, 70.0, 90.0).clip(64.0, 48.0);
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.0, 3.0, 64.0, 48.0));
    }
}
