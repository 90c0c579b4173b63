//! Grid stitching of equally sized tiles into one training image.

use crate::detection::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An image with face boxes and, per box, an optional identity.
#[derive(Debug, Clone)]
pub struct Sample {
    /// `[3, H, W]`, values in `[0, 1]`.
    pub image: Tensor,
    pub boxes: Vec<BBox>,
    pub identities: Vec<Option<u32>>,
}

impl Sample {
    pub fn size(&self) -> (usize, usize) {
        (self.image.shape()[1], self.image.shape()[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub tile_h: usize,
    pub tile_w: usize,
}

impl GridLayout {
    /// Twelve 250x250 tiles, three rows of four, giving 1000x750.
    pub const STANDARD: GridLayout = GridLayout {
        rows: 3,
        cols: 4,
        tile_h: 250,
        tile_w: 250,
    };

    pub fn tiles(&self) -> usize {
        self.rows * self.cols
    }

    /// `(height, width)` of the stitched image.
    pub fn size(&self) -> (usize, usize) {
        (self.rows * self.tile_h, self.cols * self.tile_w)
    }

    /// Pixel offset `(dx, dy)` of tile `k` (row-major).
    pub fn offset(&self, k: usize) -> (f32, f32) {
        ((k % self.cols * self.tile_w) as f32, (k / self.cols * self.tile_h) as f32)
    }
}

/// Stitch exactly twelve 250x250 tiles in the standard layout.
pub fn stitch_batch(tiles: &[Sample]) -> Result<Sample> {
    stitch_with(GridLayout::STANDARD, tiles)
}

pub fn stitch_with(layout: GridLayout, tiles: &[Sample]) -> Result<Sample> {
    if tiles.len() != layout.tiles() {
        return Err(Error::Input(format!(
            "stitching needs {} tiles, got {}",
            layout.tiles(),
            tiles.len()
        )));
    }
    let (h, w) = layout.size();
    let mut image = Tensor::zeros(&[3, h, w]);
    let mut boxes = Vec::new();
    let mut identities = Vec::new();
    for (k, t) in tiles.iter().enumerate() {
        if t.image.shape() != [3, layout.tile_h, layout.tile_w] {
            return Err(Error::Input(format!(
                "tile {k} has shape {:?}, expected [3, {}, {}]",
                t.image.shape(),
                layout.tile_h,
                layout.tile_w
            )));
        }
        if t.boxes.len() != t.identities.len() {
            return Err(Error::Input(format!("tile {k}: boxes and identities differ in count")));
        }
        let (dx, dy) = layout.offset(k);
        let (ox, oy) = (dx as usize, dy as usize);
        for c in 0..3 {
            for y in 0..layout.tile_h {
                let src = &t.image.data()[(c * layout.tile_h + y) * layout.tile_w..][..layout.tile_w];
                let start = (c * h + oy + y) * w + ox;
                image.data_mut()[start..start + layout.tile_w].copy_from_slice(src);
            }
        }
        boxes.extend(t.boxes.iter().map(|b| b.translate(dx, dy)));
        identities.extend_from_slice(&t.identities);
    }
    Ok(Sample {
        image,
        boxes,
        identities,
    })
}

/// Assign every box to the tile containing its center and move it back into
/// tile coordinates.
pub fn unstitch_boxes(layout: GridLayout, boxes: &[BBox]) -> Vec<(usize, BBox)> {
    boxes
        .iter()
        .map(|b| {
            let (cx, cy) = b.center();
            let col = ((cx / layout.tile_w as f32).floor().max(0.0) as usize).min(layout.cols - 1);
            let row = ((cy / layout.tile_h as f32).floor().max(0.0) as usize).min(layout.rows - 1);
            let k = row * layout.cols + col;
            let (dx, dy) = layout.offset(k);
            (k, b.translate(-dx, -dy))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(k: usize, layout: GridLayout, b: BBox) -> Sample {
        let n = 3 * layout.tile_h * layout.tile_w;
        Sample {
            image: Tensor::from_vec(
                &[3, layout.tile_h, layout.tile_w],
                (0..n).map(|i| (i + k * 7) as f32).collect(),
            )
            .unwrap(),
            boxes: vec![b],
            identities: vec![Some(k as u32)],
        }
    }

    #[test]
    fn standard_layout_offsets() {
        let l = GridLayout::STANDARD;
        let tiles: Vec<Sample> = (0..12)
            .map(|k| {
                let b = if k == 5 {
                    BBox::new(0.0, 0.0, 250.0, 250.0)
                } else {
                    BBox::new(10.0, 10.0, 50.0, 50.0)
                };
                tile(k, l, b)
            })
            .collect();
        let s = stitch_batch(&tiles).unwrap();
        assert_eq!(s.size(), (750, 1000));
        assert_eq!((s.boxes[0].x1, s.boxes[0].y2), (10.0, 50.0));
        let b5 = s.boxes[5];
        assert_eq!((b5.x1, b5.y1, b5.x2, b5.y2), (250.0, 250.0, 500.0, 500.0));
        // Pixel (y=300, x=600) is image 6 at (50, 100).
        assert_eq!(s.image.data()[300 * 1000 + 600], tiles[6].image.data()[50 * 250 + 100]);
        assert_eq!(s.identities[6], Some(6));
    }

    #[test]
    fn wrong_count_or_size_rejected() {
        let l = GridLayout {
            rows: 1,
            cols: 2,
            tile_h: 4,
            tile_w: 4,
        };
        let t = tile(0, l, BBox::new(0.0, 0.0, 1.0, 1.0));
        assert!(stitch_with(l, &[t.clone()]).is_err());
        let small = GridLayout { tile_h: 3, ..l };
        assert!(stitch_with(l, &[t, tile(1, small, BBox::new(0.0, 0.0, 1.0, 1.0))]).is_err());
    }
}
