//! Parameterized layers built on the raw kernels. Each layer owns its
//! [`Param`]s and accumulates gradients into their buffers on `backward`.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Real, Tensor};

use super::{conv2d_backward_opt, conv2d_forward, fc_backward, fc_forward};

/// A named trainable tensor. The gradient lives in `value`'s grad buffer.
#[derive(Debug, Clone)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub frozen: bool,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Param {
            name: name.into(),
            value,
            frozen: false,
        }
    }

    fn accumulate(&mut self, grad: &Tensor<T>) {
        for (g, &d) in self.value.grad_mut().iter_mut().zip(grad.data()) {
            *g += d;
        }
    }
}

/// Anything that owns parameters.
pub trait Module<T: Real> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |p| p.value.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |p| names.push(p.name.clone()));
        names
    }
}

/// Uniform He initialisation, bound `sqrt(6 / fan_in)`.
pub fn he_uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("shape matches generated length")
}

#[derive(Debug, Clone)]
pub struct Conv2d<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Real> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel, kernel];
        Conv2d {
            weight: Param::new(
                format!("{name}.weight"),
                he_uniform(&shape, in_channels * kernel * kernel, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_channels])),
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.weight.value, &self.bias.value, self.stride, self.pad)
    }

    /// Accumulates parameter gradients; returns the input gradient if asked.
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        let g = conv2d_backward_opt(
            grad_out,
            x,
            &self.weight.value,
            self.stride,
            self.pad,
            need_input,
        )?;
        self.weight.accumulate(&g.weight);
        self.bias.accumulate(&g.bias);
        Ok(g.input)
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Fully connected layer, weight laid out `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Param::new(
                format!("{name}.weight"),
                he_uniform(&[inputs, outputs], inputs, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[outputs])),
        }
    }

    /// Zero weight with a fixed bias.
    pub fn with_bias(name: &str, inputs: usize, bias: &[T]) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&[inputs, bias.len()])),
            bias: Param::new(
                format!("{name}.bias"),
                Tensor::from_vec(&[bias.len()], bias.to_vec()).expect("non-empty bias"),
            ),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        fc_forward(x, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = fc_backward(grad_out, x, &self.weight.value)?;
        self.weight.accumulate(&g.weight);
        self.bias.accumulate(&g.bias);
        Ok(g.input)
    }
}

impl<T: Real> Module<T> for Linear<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
