//! Max pooling of variable-size regions to a fixed grid.

use super::BBox;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Marks an output bin whose region was empty.
pub const NO_ARGMAX: usize = usize::MAX;

/// Inclusive-start, exclusive-end cell range covered by `[lo, hi)` in pixels.
fn cell_span(lo: f32, hi: f32, scale: f32, len: usize) -> (usize, usize) {
    let start = (lo * scale).round().clamp(0.0, (len - 1) as f32) as usize;
    let end = ((hi * scale).round().max(0.0) as usize).min(len);
    // Degenerate footprints still cover one cell.
    (start, end.max(start + 1))
}

/// Pool every region of a single feature map `[1, C, H, W]` to
/// `[R, C, out_h, out_w]`. Box pixel coordinates are mapped to cells with
/// `spatial_scale` (1 / stride). Returns the flat source index of each
/// output value for the backward pass.
pub fn roi_pool_forward<T: Real>(
    feat: &Tensor<T>,
    boxes: &[BBox],
    spatial_scale: f32,
    out: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = feat.dims4("roi_pool_forward")?;
    if n != 1 {
        return Err(Error::dim(
            "roi_pool_forward",
            format!("expected a single feature map, got {:?}", feat.shape()),
        ));
    }
    if h == 0 || w == 0 {
        return Err(Error::dim("roi_pool_forward", "empty feature map"));
    }
    let (oh, ow) = out;
    let mut pooled = Tensor::zeros(&[boxes.len(), c, oh, ow]);
    let mut argmax = vec![NO_ARGMAX; boxes.len() * c * oh * ow];
    let src = feat.data();
    for (r, b) in boxes.iter().enumerate() {
        let (x0, x1) = cell_span(b.x1, b.x2, spatial_scale, w);
        let (y0, y1) = cell_span(b.y1, b.y2, spatial_scale, h);
        let bin_h = (y1 - y0) as f64 / oh as f64;
        let bin_w = (x1 - x0) as f64 / ow as f64;
        for ph in 0..oh {
            let hs = (y0 + (ph as f64 * bin_h).floor() as usize).min(h);
            let he = (y0 + ((ph + 1) as f64 * bin_h).ceil() as usize).min(h);
            for pw in 0..ow {
                let ws = (x0 + (pw as f64 * bin_w).floor() as usize).min(w);
                let we = (x0 + ((pw + 1) as f64 * bin_w).ceil() as usize).min(w);
                for ch in 0..c {
                    let o = ((r * c + ch) * oh + ph) * ow + pw;
                    let mut best: Option<(T, usize)> = None;
                    for y in hs..he {
                        for x in ws..we {
                            let i = (ch * h + y) * w + x;
                            if best.map_or(true, |(v, _)| src[i] > v) {
                                best = Some((src[i], i));
                            }
                        }
                    }
                    if let Some((v, i)) = best {
                        pooled.data_mut()[o] = v;
                        argmax[o] = i;
                    }
                }
            }
        }
    }
    Ok((pooled, argmax))
}

/// Route each pooled gradient to the cell it came from.
pub fn roi_pool_backward<T: Real>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    feat_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::dim(
            "roi_pool_backward",
            format!("grad {:?} vs {} routes", grad_out.shape(), argmax.len()),
        ));
    }
    let mut g = Tensor::zeros(feat_shape);
    let dst = g.data_mut();
    for (&gv, &i) in grad_out.data().iter().zip(argmax) {
        if i != NO_ARGMAX {
            dst[i] += gv;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_cell_box_is_a_crop() {
        let data: Vec<f32> = (0..100).map(|v| v as f32).collect();
        let feat = Tensor::from_vec(&[1, 1, 10, 10], data).unwrap();
        // Cells 2..9 horizontally and 1..8 vertically at stride 8.
        let b = BBox::new(16.0, 8.0, 72.0, 64.0);
        let (p, _) = roi_pool_forward(&feat, &[b], 1.0 / 8.0, (7, 7)).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(p.data()[i * 7 + j], ((i + 1) * 10 + j + 2) as f32);
            }
        }
    }

    #[test]
    fn degenerate_box_covers_one_cell() {
        let feat = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = BBox::new(9.0, 9.0, 9.0, 9.0);
        let (p, arg) = roi_pool_forward(&feat, &[b], 1.0 / 8.0, (2, 2)).unwrap();
        assert!(p.data().iter().all(|&v| v == 4.0));
        assert!(arg.iter().all(|&i| i == 3));
    }

    #[test]
    fn gradient_sums_at_argmax() {
        let feat = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = BBox::new(0.0, 0.0, 16.0, 16.0);
        let (p, arg) = roi_pool_forward(&feat, &[b], 1.0 / 8.0, (3, 3)).unwrap();
        let g = roi_pool_backward(&Tensor::full(p.shape(), 1.0), &arg, feat.shape()).unwrap();
        assert_eq!(g.sum(), 9.0);
    }
}
