//! Bilinear sampling kernel `max(0, 1 - |x_s - w|) * max(0, 1 - |y_s - h|)`
//! and its gradients with respect to the input map and the sample positions.
//!
//! Only the (at most four) taps with non-zero weight are visited. Terms are
//! accumulated in the same order as the full double sum over the map, so the
//! result is bit-identical to it.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::SampleGrid;

/// One candidate tap along an axis: index, kernel weight, and the sign of the
/// kernel's derivative with respect to the sample coordinate.
#[derive(Clone, Copy)]
struct Tap<T> {
    index: usize,
    weight: T,
    slope: T,
}

/// In-range taps around `s` on an axis of length `len`: `floor(s)` then
/// `floor(s) + 1`.
fn taps<T: Real>(s: T, len: usize) -> ([Tap<T>; 2], usize) {
    let blank = Tap {
        index: 0,
        weight: T::zero(),
        slope: T::zero(),
    };
    let mut out = [blank; 2];
    let mut n = 0;
    let Some(base) = s.floor().to_i64() else {
        return (out, 0);
    };
    for idx in [base, base + 1] {
        if idx < 0 || idx >= len as i64 {
            continue;
        }
        let pos = T::of(idx as f64);
        let weight = (T::one() - (s - pos).abs()).max(T::zero());
        // +1 on s <= w < s + 1, -1 on s - 1 < w < s, 0 elsewhere.
        let slope = if s <= pos && pos < s + T::one() {
            T::one()
        } else if s - T::one() < pos && pos < s {
            -T::one()
        } else {
            T::zero()
        };
        out[n] = Tap {
            index: idx as usize,
            weight,
            slope,
        };
        n += 1;
    }
    (out, n)
}

fn check_shapes<T: Real>(
    op: &'static str,
    u: &Tensor<T>,
    grid: &SampleGrid<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (r, c, h, w) = u.dims4(op)?;
    if grid.regions() != r || grid.src_size != (h, w) {
        return Err(Error::dim(
            op,
            format!(
                "input {:?} vs grid of {} regions over source {:?}",
                u.shape(),
                grid.regions(),
                grid.src_size
            ),
        ));
    }
    Ok((r, c, h, w))
}

pub fn bilinear_sample_forward<T: Real>(u: &Tensor<T>, grid: &SampleGrid<T>) -> Result<Tensor<T>> {
    let (r, c, h, w) = check_shapes("bilinear_sample_forward", u, grid)?;
    let (ho, wo) = grid.out_size;
    let mut v = Tensor::zeros(&[r, c, ho, wo]);
    for reg in 0..r {
        let src = u.outer(reg);
        let dst = v.outer_mut(reg);
        for i in 0..ho {
            for j in 0..wo {
                let (xs, ys) = grid.point(reg, i, j);
                let (tx, nx) = taps(xs, w);
                let (ty, ny) = taps(ys, h);
                for ch in 0..c {
                    let plane = &src[ch * h * w..(ch + 1) * h * w];
                    let mut acc = T::zero();
                    for y in &ty[..ny] {
                        for x in &tx[..nx] {
                            acc += plane[y.index * w + x.index] * x.weight * y.weight;
                        }
                    }
                    dst[(ch * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct SamplerGrads<T> {
    /// Same shape as the sampled input map.
    pub input: Tensor<T>,
    /// `[R, H_out, W_out, 2]`, `(d/dx_s, d/dy_s)` per output position.
    pub coords: Tensor<T>,
}

pub fn bilinear_sample_backward<T: Real>(
    grad_v: &Tensor<T>,
    u: &Tensor<T>,
    grid: &SampleGrid<T>,
) -> Result<SamplerGrads<T>> {
    let (r, c, h, w) = check_shapes("bilinear_sample_backward", u, grid)?;
    let (ho, wo) = grid.out_size;
    if grad_v.shape() != [r, c, ho, wo] {
        return Err(Error::dim(
            "bilinear_sample_backward",
            format!("grad {:?}, output is {:?}", grad_v.shape(), [r, c, ho, wo]),
        ));
    }
    let mut gu = Tensor::zeros(u.shape());
    let mut gc = Tensor::zeros(&[r, ho, wo, 2]);
    for reg in 0..r {
        let src = u.outer(reg);
        let gsrc = gu.outer_mut(reg);
        let gv = grad_v.outer(reg);
        let mut gcoord = vec![T::zero(); ho * wo * 2];
        for i in 0..ho {
            for j in 0..wo {
                let (xs, ys) = grid.point(reg, i, j);
                let (tx, nx) = taps(xs, w);
                let (ty, ny) = taps(ys, h);
                let (mut dx, mut dy) = (T::zero(), T::zero());
                for ch in 0..c {
                    let g = gv[(ch * ho + i) * wo + j];
                    if g == T::zero() {
                        continue;
                    }
                    let off = ch * h * w;
                    for y in &ty[..ny] {
                        for x in &tx[..nx] {
                            let idx = off + y.index * w + x.index;
                            gsrc[idx] += g * x.weight * y.weight;
                            dx += g * src[idx] * y.weight * x.slope;
                            dy += g * src[idx] * x.weight * y.slope;
                        }
                    }
                }
                gcoord[(i * wo + j) * 2] = dx;
                gcoord[(i * wo + j) * 2 + 1] = dy;
            }
        }
        gc.outer_mut(reg).copy_from_slice(&gcoord);
    }
    Ok(SamplerGrads {
        input: gu,
        coords: gc,
    })
}
