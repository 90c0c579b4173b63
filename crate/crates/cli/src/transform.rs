//! `facestn transform`: warp a PNG through the affine sampler.

use std::path::Path;

use facestn::data::{load_image, save_png};
use facestn::stn::{affine_grid, bilinear_sample_forward, AffineTheta};
use facestn::Tensor;

use crate::{CliError, CliResult};

pub fn parse_theta(s: &str) -> CliResult<AffineTheta<f32>> {
    let vals: Vec<f32> = s
        .split(',')
        .map(|v| v.trim().parse::<f32>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad --theta `{s}`: {e}")))?;
    let arr: [f32; 6] = vals
        .try_into()
        .map_err(|v: Vec<f32>| CliError::Usage(format!("--theta needs 6 values, got {}", v.len())))?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage("--theta values must be finite".into()));
    }
    Ok(AffineTheta(arr))
}

/// Sample `image` (`[3, H, W]`) on the grid of `theta` at full resolution.
pub fn warp(image: &Tensor, theta: AffineTheta<f32>) -> CliResult<Tensor> {
    let (c, h, w) = match image.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(CliError::Usage(format!("expected a [C, H, W] image, got {s:?}"))),
    };
    let grid = affine_grid(&[theta], (h, w), (h, w));
    let u = image.clone().reshape(&[1, c, h, w])?;
    Ok(bilinear_sample_forward(&u, &grid)?.reshape(&[c, h, w])?)
}

pub fn cmd_transform(
    image: &Path,
    out: &Path,
    theta: Option<&str>,
    alpha: Option<f64>,
    tx: Option<f64>,
    ty: Option<f64>,
) -> CliResult<()> {
    let theta = match theta {
        Some(s) => parse_theta(s)?,
        None => AffineTheta::from_rotation(
            alpha.unwrap_or(0.0) as f32,
            tx.unwrap_or(0.0) as f32,
            ty.unwrap_or(0.0) as f32,
        ),
    };
    let img = load_image(image)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", image.display())))?;
    save_png(&warp(&img, theta)?, out)?;
    Ok(())
}
