use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Load an image as `[3, H, W]` with values `v / 255`.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(&[3, h, w]);
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            t.data_mut()[(c * h + y as usize) * w + x as usize] = f32::from(px[c]) / 255.0;
        }
    }
    Ok(t)
}

/// Inverse of [`load_image`]: values are clamped to `[0, 1]` and rounded.
pub fn to_rgb8(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = match t.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(Error::dim("to_rgb8", format!("expected [3, H, W], got {s:?}"))),
    };
    if c != 3 {
        return Err(Error::dim("to_rgb8", format!("expected 3 channels, got {c}")));
    }
    let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |ch: usize| quant(t.data()[(ch * h + y as usize) * w + x as usize]);
        Rgb([at(0), at(1), at(2)])
    }))
}

pub fn save_png(t: &Tensor, path: &Path) -> Result<()> {
    to_rgb8(t)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let data: Vec<f32> = (0..3 * 5 * 4).map(|i| ((i * 37) % 256) as f32 / 255.0).collect();
        let t = Tensor::from_vec(&[3, 5, 4], data).unwrap();
        save_png(&t, &p).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), t.data());
    }
}
