//! 2-D cross-correlation on NCHW tensors.
//!
//! The forward pass lowers each image to a column matrix and accumulates
//! `bias + sum_c sum_i sum_j x * w` in exactly that order, so in `f64` it is
//! bit-identical to a textbook nested-loop convolution.

use crate::error::{Error, Result};
use crate::tensor::{window_out, Real, Tensor};

use super::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    fn new<T: Real>(
        op: &'static str,
        input: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<(usize, usize, Self)> {
        let (n, c, h, w) = input.dims4(op)?;
        let (k, wc, kh, kw) = weight.dims4(op)?;
        if wc != c {
            return Err(Error::dim(
                op,
                format!(
                    "input {:?} has {c} channels but weight {:?} expects {wc}",
                    input.shape(),
                    weight.shape()
                ),
            ));
        }
        if stride == 0 {
            return Err(Error::dim(op, "stride must be >= 1"));
        }
        let out_h = window_out(h, kh, stride, pad);
        let out_w = window_out(w, kw, stride, pad);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::dim(
                op,
                format!(
                    "kernel {kh}x{kw} larger than padded input {}x{}",
                    h + 2 * pad,
                    w + 2 * pad
                ),
            ));
        };
        Ok((
            n,
            k,
            ConvGeometry {
                channels: c,
                height: h,
                width: w,
                kernel_h: kh,
                kernel_w: kw,
                stride,
                pad,
                out_h,
                out_w,
            },
        ))
    }

    fn taps(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Column matrix `[taps, positions]` for one image; padded taps are zero.
    fn im2col<T: Real>(&self, image: &[T], col: &mut [T]) {
        let p_len = self.positions();
        let mut q = 0;
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..self.kernel_h {
                for j in 0..self.kernel_w {
                    let row = &mut col[q * p_len..(q + 1) * p_len];
                    for oh in 0..self.out_h {
                        let y = (oh * self.stride + i) as isize - self.pad as isize;
                        let dst = &mut row[oh * self.out_w..(oh + 1) * self.out_w];
                        if y < 0 || y >= self.height as isize {
                            dst.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[y as usize * self.width..(y as usize + 1) * self.width];
                        for (ow, d) in dst.iter_mut().enumerate() {
                            let x = (ow * self.stride + j) as isize - self.pad as isize;
                            *d = if x < 0 || x >= self.width as isize {
                                T::zero()
                            } else {
                                src[x as usize]
                            };
                        }
                    }
                    q += 1;
                }
            }
        }
    }

    fn col2im<T: Real>(&self, col: &[T], image: &mut [T]) {
        let p_len = self.positions();
        let mut q = 0;
        for c in 0..self.channels {
            let plane =
                &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..self.kernel_h {
                for j in 0..self.kernel_w {
                    let row = &col[q * p_len..(q + 1) * p_len];
                    for oh in 0..self.out_h {
                        let y = (oh * self.stride + i) as isize - self.pad as isize;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        let dst = &mut plane[y as usize * self.width..(y as usize + 1) * self.width];
                        for ow in 0..self.out_w {
                            let x = (ow * self.stride + j) as isize - self.pad as isize;
                            if x >= 0 && x < self.width as isize {
                                dst[x as usize] += row[oh * self.out_w + ow];
                            }
                        }
                    }
                    q += 1;
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, k, g) = ConvGeometry::new("conv2d_forward", input, weight, stride, pad)?;
    if bias.len() != k {
        return Err(Error::dim(
            "conv2d_forward",
            format!("bias {:?} for {k} filters", bias.shape()),
        ));
    }
    let (taps, p_len) = (g.taps(), g.positions());
    let mut out = Tensor::zeros(&[n, k, g.out_h, g.out_w]);
    let mut col = vec![T::zero(); taps * p_len];
    for b in 0..n {
        g.im2col(input.outer(b), &mut col);
        let dst = out.outer_mut(b);
        for f in 0..k {
            let row = &mut dst[f * p_len..(f + 1) * p_len];
            row.iter_mut().for_each(|v| *v = bias.data()[f]);
            let wrow = &weight.data()[f * taps..(f + 1) * taps];
            for (q, &wq) in wrow.iter().enumerate() {
                let src = &col[q * p_len..(q + 1) * p_len];
                for (o, &x) in row.iter_mut().zip(src) {
                    *o += wq * x;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Conv2dGrads<T>> {
    conv2d_backward_opt(grad_out, input, weight, stride, pad, true)
}

/// Like [`conv2d_backward`], optionally skipping the input gradient.
pub fn conv2d_backward_opt<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input: bool,
) -> Result<Conv2dGrads<T>> {
    let (n, k, g) = ConvGeometry::new("conv2d_backward", input, weight, stride, pad)?;
    if grad_out.shape() != [n, k, g.out_h, g.out_w] {
        return Err(Error::dim(
            "conv2d_backward",
            format!(
                "grad_out {:?}, forward output is {:?}",
                grad_out.shape(),
                [n, k, g.out_h, g.out_w]
            ),
        ));
    }
    let (taps, p_len) = (g.taps(), g.positions());
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[k]);
    let mut gi = need_input.then(|| Tensor::zeros(input.shape()));
    let mut col = vec![T::zero(); taps * p_len];
    let mut col_grad = vec![T::zero(); if need_input { taps * p_len } else { 0 }];
    for b in 0..n {
        g.im2col(input.outer(b), &mut col);
        let go = grad_out.outer(b);
        for f in 0..k {
            let grow = &go[f * p_len..(f + 1) * p_len];
            gb.data_mut()[f] += grow.iter().copied().sum::<T>();
            let gwrow = &mut gw.data_mut()[f * taps..(f + 1) * taps];
            for (q, gwq) in gwrow.iter_mut().enumerate() {
                *gwq += dot(grow, &col[q * p_len..(q + 1) * p_len]);
            }
        }
        if let Some(gi) = gi.as_mut() {
            col_grad.iter_mut().for_each(|v| *v = T::zero());
            for f in 0..k {
                let grow = &go[f * p_len..(f + 1) * p_len];
                let wrow = &weight.data()[f * taps..(f + 1) * taps];
                for (q, &wq) in wrow.iter().enumerate() {
                    let dst = &mut col_grad[q * p_len..(q + 1) * p_len];
                    for (d, &gv) in dst.iter_mut().zip(grow) {
                        *d += wq * gv;
                    }
                }
            }
            g.col2im(&col_grad, gi.outer_mut(b));
        }
    }
    Ok(Conv2dGrads {
        input: gi,
        weight: gw,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::conv2d_nested;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_input_gives_broadcast_bias() {
        let x = Tensor::<f32>::zeros(&[2, 3, 5, 5]);
        let w = Tensor::full(&[4, 3, 3, 3], 0.7);
        let b = Tensor::from_vec(&[4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let y = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
        assert_eq!(y.shape(), &[2, 4, 5, 5]);
        for n in 0..2 {
            for k in 0..4 {
                let plane = &y.outer(n)[k * 25..(k + 1) * 25];
                assert!(plane.iter().all(|&v| v == b.data()[k]));
            }
        }
    }

    #[test]
    fn impulse_response_is_unflipped_kernel() {
        let mut x = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        x.data_mut()[4] = 1.0;
        let w = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(y.data()[4], w.data()[4]);
        // Cross-correlation of an impulse yields the kernel rotated by 180 degrees.
        let rotated: Vec<f64> = w.data().iter().rev().copied().collect();
        assert_eq!(y.data(), rotated.as_slice());
    }

    #[test]
    fn matches_nested_loop_oracle_bitwise_in_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(stride, pad) in &[(2, 0), (1, 1), (1, 0), (3, 2)] {
            let x = random(&[1, 2, 5, 5], &mut rng);
            let w = random(&[3, 2, 3, 3], &mut rng);
            let b = random(&[3], &mut rng);
            let fast = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
            let slow = conv2d_nested(&x, &w, &b, stride, pad);
            assert_eq!(fast.shape(), slow.shape());
            assert_eq!(fast.data(), slow.data(), "stride {stride} pad {pad}");
        }
    }

    #[test]
    fn f32_within_relative_tolerance_of_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x = random(&[2, 3, 6, 7], &mut rng);
            let w = random(&[4, 3, 3, 3], &mut rng);
            let b = random(&[4], &mut rng);
            let slow = conv2d_nested(&x, &w, &b, 1, 1);
            let fast = conv2d_forward(&x.cast::<f32>(), &w.cast(), &b.cast(), 1, 1).unwrap();
            for (a, e) in fast.data().iter().zip(slow.data()) {
                let rel = (f64::from(*a) - e).abs() / e.abs().max(1.0);
                assert!(rel <= 1e-5, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[1, 2, 4, 4], &mut rng);
        let w = random(&[2, 2, 3, 3], &mut rng);
        let g = conv2d_backward(&Tensor::zeros(&[1, 2, 2, 2]), &x, &w, 1, 0).unwrap();
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.weight.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_chain_rule() {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![3.0f64]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![-2.0]).unwrap();
        let go = Tensor::from_vec(&[1, 1, 1, 1], vec![0.5]).unwrap();
        let g = conv2d_backward(&go, &x, &w, 1, 0).unwrap();
        assert_eq!(g.weight.data(), &[1.5]);
        assert_eq!(g.input.unwrap().data(), &[-1.0]);
        assert_eq!(g.bias.data(), &[0.5]);
    }

    #[test]
    fn backward_rejects_wrong_grad_shape() {
        let x = Tensor::<f32>::zeros(&[1, 1, 4, 4]);
        let w = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(conv2d_backward(&Tensor::zeros(&[1, 1, 3, 3]), &x, &w, 1, 0).is_err());
    }

    #[test]
    fn batch_items_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(&[3, 2, 5, 5], &mut rng);
        let w = random(&[2, 2, 3, 3], &mut rng);
        let b = random(&[2], &mut rng);
        let all = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
        for n in 0..3 {
            let single = Tensor::from_vec(&[1, 2, 5, 5], x.outer(n).to_vec()).unwrap();
            let y = conv2d_forward(&single, &w, &b, 1, 1).unwrap();
            assert_eq!(y.data(), all.outer(n));
        }
        let _ = rng.gen::<u8>();
    }
}
