use super::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    /// Anchor side lengths in pixels (square-equivalent).
    pub scales: Vec<f32>,
    /// Height / width aspect ratios.
    pub ratios: Vec<f32>,
    /// Feature-map stride in pixels.
    pub stride: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            scales: vec![32.0, 64.0, 128.0],
            ratios: vec![1.0, 1.5],
            stride: 8,
        }
    }
}

impl AnchorConfig {
    pub fn per_location(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }
}

/// Anchors for every feature cell, ordered `(y, x, scale, ratio)`, so anchor
/// `((y * feat_w + x) * A + a)` belongs to cell `(y, x)`. A ratio-`r` anchor
/// of scale `s` is `s / sqrt(r)` wide and `s * sqrt(r)` tall.
pub fn generate_anchors(cfg: &AnchorConfig, feat_h: usize, feat_w: usize) -> Vec<BBox> {
    let stride = cfg.stride as f32;
    let offset = (stride - 1.0) / 2.0;
    let shapes: Vec<(f32, f32)> = cfg
        .scales
        .iter()
        .flat_map(|&s| cfg.ratios.iter().map(move |&r| (s / r.sqrt(), s * r.sqrt())))
        .collect();
    let mut anchors = Vec::with_capacity(feat_h * feat_w * shapes.len());
    for y in 0..feat_h {
        for x in 0..feat_w {
            let (cx, cy) = (x as f32 * stride + offset, y as f32 * stride + offset);
            for &(w, h) in &shapes {
                anchors.push(BBox::from_center(cx, cy, w, h));
            }
        }
    }
    anchors
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_square() {
        let cfg = AnchorConfig {
            scales: vec![16.0],
            ratios: vec![1.0],
            stride: 8,
        };
        let a = generate_anchors(&cfg, 1, 1);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].center(), (3.5, 3.5));
        assert_eq!((a[0].width(), a[0].height()), (16.0, 16.0));
    }

    #[test]
    fn counts_and_lattice() {
        let cfg = AnchorConfig {
            scales: vec![16.0, 32.0],
            ratios: vec![1.0, 1.5],
            stride: 8,
        };
        let a = generate_anchors(&cfg, 2, 2);
        assert_eq!(a.len(), 16);
        for (i, b) in a.iter().enumerate() {
            let cell = i / 4;
            let (cx, cy) = b.center();
            assert!((cx - ((cell % 2) as f32 * 8.0 + 3.5)).abs() < 1e-4);
            assert!((cy - ((cell / 2) as f32 * 8.0 + 3.5)).abs() < 1e-4);
        }
    }

    #[test]
    fn ratio_preserves_area() {
        let cfg = AnchorConfig::default();
        for b in generate_anchors(&cfg, 1, 1) {
            let s = b.width() * b.height();
            let expected = [32.0f32, 64.0, 128.0]
                .iter()
                .map(|s| s * s)
                .min_by(|x, y| (x - s).abs().total_cmp(&(y - s).abs()))
                .unwrap();
            assert!((s - expected).abs() / expected < 1e-5);
        }
    }
}
