use crate::error::{Error, Result};
use crate::tensor::{window_out, Real, Tensor};

/// Max pooling without padding. Returns the pooled tensor and, per output
/// cell, the flat index into `input` of the winning element (first maximum
/// on ties).
pub fn maxpool2d_forward<T: Real>(
    input: &Tensor<T>,
    k: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4("maxpool2d_forward")?;
    let (Some(oh), Some(ow)) = (window_out(h, k, stride, 0), window_out(w, k, stride, 0)) else {
        return Err(Error::dim(
            "maxpool2d_forward",
            format!("window {k} stride {stride} does not fit {h}x{w}"),
        ));
    };
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let src = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + y * stride * w + x * stride;
                for dy in 0..k {
                    let row = base + (y * stride + dy) * w + x * stride;
                    for idx in row..row + k {
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                }
                out.data_mut()[argmax.len()] = src[best];
                argmax.push(best);
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::dim(
            "maxpool2d_backward",
            format!("{} gradients for {} pooled cells", grad_out.len(), argmax.len()),
        ));
    }
    let mut gi = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gi.data_mut()[idx] += g;
    }
    Ok(gi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field() {
        let x = Tensor::<f32>::full(&[1, 2, 4, 6], 3.5);
        let (y, _) = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn ramp_windows_and_routing() {
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
        let (y, idx) = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
        assert_eq!(idx, vec![5, 7, 13, 15]);
        let g = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gi = maxpool2d_backward(&g, &idx, x.shape()).unwrap();
        for (i, &v) in gi.data().iter().enumerate() {
            let expect = match i {
                5 => 1.0,
                7 => 2.0,
                13 => 3.0,
                15 => 4.0,
                _ => 0.0,
            };
            assert_eq!(v, expect);
        }
        assert_eq!(gi.sum(), g.sum());
    }

    #[test]
    fn odd_sizes_floor() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 3]);
        let (y, _) = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert!(maxpool2d_forward(&x, 4, 1).is_err());
    }
}
