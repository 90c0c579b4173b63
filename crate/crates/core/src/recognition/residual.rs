use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{relu_backward, relu_forward, Conv2d, Module, Param};
use crate::tensor::{Real, Tensor};

/// `out = ReLU(F(x) + shortcut(x))` with `F = conv3x3 -> ReLU -> conv3x3`.
/// The shortcut is a strided 1x1 projection when the shape changes.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T = f32> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub proj: Option<Conv2d<T>>,
}

#[derive(Debug, Clone)]
pub struct ResidualCache<T> {
    input: Tensor<T>,
    hidden: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let proj = (inputs != outputs || stride != 1)
            .then(|| Conv2d::new(&format!("{name}.proj"), inputs, outputs, 1, stride, 0, rng));
        ResidualBlock {
            conv1: Conv2d::new(&format!("{name}.conv1"), inputs, outputs, 3, stride, 1, rng),
            conv2: Conv2d::new(&format!("{name}.conv2"), outputs, outputs, 3, 1, 1, rng),
            proj,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ResidualCache<T>)> {
        let hidden = relu_forward(&self.conv1.forward(x)?);
        let mut sum = self.conv2.forward(&hidden)?;
        let shortcut = match &self.proj {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        if shortcut.shape() != sum.shape() {
            return Err(Error::dim(
                "residual_block",
                format!("branch {:?} vs shortcut {:?}", sum.shape(), shortcut.shape()),
            ));
        }
        sum.add_assign(&shortcut)?;
        let output = relu_forward(&sum);
        Ok((
            output.clone(),
            ResidualCache {
                input: x.clone(),
                hidden,
                output,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &ResidualCache<T>,
        grad_out: &Tensor<T>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        let g_sum = relu_backward(grad_out, &cache.output)?;
        let g_hidden = self
            .conv2
            .backward(&cache.hidden, &g_sum, true)?
            .expect("input gradient requested");
        let g_pre = relu_backward(&g_hidden, &cache.hidden)?;
        let g_branch = self.conv1.backward(&cache.input, &g_pre, need_input)?;
        let g_short = match &mut self.proj {
            Some(p) => p.backward(&cache.input, &g_sum, need_input)?,
            None => need_input.then(|| g_sum.clone()),
        };
        match (g_branch, g_short) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b)?;
                Ok(Some(a))
            }
            _ => Ok(None),
        }
    }
}

impl<T: Real> Module<T> for ResidualBlock<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
        if let Some(p) = &self.proj {
            p.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_params_mut(f);
        self.conv2.visit_params_mut(f);
        if let Some(p) = &mut self.proj {
            p.visit_params_mut(f);
        }
    }
}
