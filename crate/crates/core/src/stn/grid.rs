//! Affine grid generation and its gradient with respect to theta.
//!
//! The target lattice spans the normalized square `[-1, 1]^2` (corners on
//! the border), is mapped through theta, and is then scaled into 0-based
//! source pixel units: `x_pix = (x_norm + 1) / 2 * (W - 1)`.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::AffineTheta;

/// Source sampling positions `(x, y)` in source-pixel units, shape
/// `[R, H_out, W_out, 2]`.
#[derive(Debug, Clone)]
pub struct SampleGrid<T = f32> {
    pub coords: Tensor<T>,
    pub out_size: (usize, usize),
    pub src_size: (usize, usize),
}

impl<T: Real> SampleGrid<T> {
    pub fn regions(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn point(&self, r: usize, i: usize, j: usize) -> (T, T) {
        let (ho, wo) = self.out_size;
        let base = ((r * ho + i) * wo + j) * 2;
        (self.coords.data()[base], self.coords.data()[base + 1])
    }

    /// Grid from explicit coordinates, e.g. for direct sampler tests.
    pub fn from_coords(coords: Tensor<T>, src_size: (usize, usize)) -> Result<Self> {
        match *coords.shape() {
            [_, ho, wo, 2] => Ok(SampleGrid {
                coords,
                out_size: (ho, wo),
                src_size,
            }),
            _ => Err(Error::dim(
                "sample_grid",
                format!("expected [R, H, W, 2], got {:?}", coords.shape()),
            )),
        }
    }
}

/// One axis of the target lattice.
struct Axis<T> {
    /// Normalized coordinate in [-1, 1] (0 for a single sample).
    norm: Vec<T>,
    /// `half * norm`, computed so integer lattices stay exact.
    centered: Vec<T>,
    /// `(src - 1) / 2`, the normalized-to-pixel scale.
    half: T,
}

impl<T: Real> Axis<T> {
    fn new(out: usize, src: usize) -> Self {
        let half = T::of((src as f64 - 1.0) / 2.0);
        let (norm, centered) = if out == 1 {
            (vec![T::zero()], vec![T::zero()])
        } else {
            let m = T::of((out - 1) as f64);
            let span = T::of((src - 1) as f64);
            (0..out)
                .map(|j| {
                    let jt = T::of(j as f64);
                    (T::of(2.0) * jt / m - T::one(), jt * span / m - half)
                })
                .unzip()
        };
        Axis {
            norm,
            centered,
            half,
        }
    }
}

pub fn affine_grid<T: Real>(
    thetas: &[AffineTheta<T>],
    out_size: (usize, usize),
    src_size: (usize, usize),
) -> SampleGrid<T> {
    let (ho, wo) = out_size;
    let (h, w) = src_size;
    assert!(ho >= 1 && wo >= 1 && h >= 1 && w >= 1, "grid sizes must be >= 1");
    assert!(!thetas.is_empty(), "affine_grid needs at least one region");
    let ax = Axis::new(wo, w);
    let ay = Axis::new(ho, h);
    let mut coords = Vec::with_capacity(thetas.len() * ho * wo * 2);
    for theta in thetas {
        let p = theta.params();
        for i in 0..ho {
            for j in 0..wo {
                let xs = p[0] * ax.centered[j] + p[1] * (ax.half * ay.norm[i]) + ax.half * p[2]
                    + ax.half;
                let ys = p[3] * (ay.half * ax.norm[j]) + p[4] * ay.centered[i] + ay.half * p[5]
                    + ay.half;
                coords.push(xs);
                coords.push(ys);
            }
        }
    }
    let coords =
        Tensor::from_vec(&[thetas.len(), ho, wo, 2], coords).expect("one point pair per cell");
    SampleGrid {
        coords,
        out_size,
        src_size,
    }
}

/// Chain rule from source-coordinate gradients back to each region's theta.
pub fn theta_backward<T: Real>(
    grad_coords: &Tensor<T>,
    out_size: (usize, usize),
    src_size: (usize, usize),
) -> Result<Vec<[T; 6]>> {
    let (ho, wo) = out_size;
    let regions = match *grad_coords.shape() {
        [r, gh, gw, 2] if gh == ho && gw == wo => r,
        _ => {
            return Err(Error::dim(
                "theta_backward",
                format!("grad_coords {:?} for output {ho}x{wo}", grad_coords.shape()),
            ))
        }
    };
    let ax = Axis::new(wo, src_size.1);
    let ay = Axis::new(ho, src_size.0);
    let mut out = Vec::with_capacity(regions);
    for r in 0..regions {
        let g = grad_coords.outer(r);
        let mut acc = [T::zero(); 6];
        for i in 0..ho {
            for j in 0..wo {
                let gx = g[(i * wo + j) * 2];
                let gy = g[(i * wo + j) * 2 + 1];
                acc[0] += gx * ax.centered[j];
                acc[1] += gx * ax.half * ay.norm[i];
                acc[2] += gx * ax.half;
                acc[3] += gy * ay.half * ax.norm[j];
                acc[4] += gy * ay.centered[i];
                acc[5] += gy * ay.half;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_grid_is_exact_pixel_lattice() {
        let g = affine_grid(&[AffineTheta::<f32>::identity()], (4, 4), (4, 4));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.point(0, i, j), (j as f32, i as f32));
            }
        }
        for size in [1usize, 2, 5, 7, 31, 250] {
            let g = affine_grid(&[AffineTheta::<f64>::identity()], (size, size + 3), (size, size + 3));
            for i in 0..size {
                for j in 0..size + 3 {
                    assert_eq!(g.point(0, i, j), (j as f64, i as f64));
                }
            }
        }
    }

    #[test]
    fn quarter_turn_rotates_lattice_about_center() {
        let g = affine_grid(&[AffineTheta::<f64>::from_rotation(FRAC_PI_2, 0.0, 0.0)], (5, 5), (5, 5));
        for i in 0..5 {
            for j in 0..5 {
                // Hand-applied transform: normalized (x, y) -> (-y, x), center 2.
                let (xn, yn) = (j as f64 / 2.0 - 1.0, i as f64 / 2.0 - 1.0);
                let (xe, ye) = ((-yn + 1.0) * 2.0, (xn + 1.0) * 2.0);
                let (x, y) = g.point(0, i, j);
                assert!((x - xe).abs() < 1e-12 && (y - ye).abs() < 1e-12);
                assert!((x - (4.0 - i as f64)).abs() < 1e-12 && (y - j as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_translation_shifts_half_extent() {
        let (h, w) = (6, 9);
        let theta = AffineTheta::<f64>([1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let g = affine_grid(&[theta], (h, w), (h, w));
        for i in 0..h {
            for j in 0..w {
                let (x, y) = g.point(0, i, j);
                assert_eq!(x, j as f64 + (w as f64 - 1.0) / 2.0);
                assert_eq!(y, i as f64);
            }
        }
    }

    #[test]
    fn center_point_gradient_is_translation_only() {
        let gc = Tensor::from_vec(&[1, 1, 1, 2], vec![0.7f64, -1.3]).unwrap();
        let g = theta_backward(&gc, (1, 1), (9, 5)).unwrap();
        assert_eq!(g[0][0], 0.0);
        assert_eq!(g[0][1], 0.0);
        assert_eq!(g[0][3], 0.0);
        assert_eq!(g[0][4], 0.0);
        assert_eq!(g[0][2], 0.7 * 2.0);
        assert_eq!(g[0][5], -1.3 * 4.0);
    }

    #[test]
    fn zero_coordinate_gradient() {
        let g = theta_backward(&Tensor::<f32>::zeros(&[3, 4, 5, 2]), (4, 5), (7, 7)).unwrap();
        assert!(g.iter().flatten().all(|&v| v == 0.0));
    }
}
