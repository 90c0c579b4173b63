//! The recognition feature extractor. Front convolutions mirror the backbone
//! blocks that are *not* shared; the residual stack, global average pool and
//! embedding FC follow.

use rand::Rng;

use super::{ResidualBlock, ResidualCache};
use crate::error::{Error, Result};
use crate::numerics::{relu_backward, relu_forward, Conv2d, Linear, Module, Param};
use crate::tensor::{Real, Tensor};

/// Number of backbone blocks that can be shared with the recognition branch.
pub const MAX_SHARE_DEPTH: usize = 4;

#[derive(Debug, Clone)]
pub struct SNet<T = f32> {
    pub front: Vec<Conv2d<T>>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub fc: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct SNetCache<T> {
    front_in: Vec<Tensor<T>>,
    front_out: Vec<Tensor<T>>,
    blocks: Vec<ResidualCache<T>>,
    pooled: Tensor<T>,
    spatial: Vec<usize>,
}

/// Block strides of the residual stack.
fn stride_of(i: usize) -> usize {
    if i == 0 {
        1
    } else {
        2
    }
}

impl<T: Real> SNet<T> {
    /// `backbone_widths` are the output channels of backbone blocks 1..=4;
    /// `image_channels` feeds the first front conv when nothing is shared.
    pub fn new(
        name: &str,
        share_depth: usize,
        image_channels: usize,
        backbone_widths: &[usize],
        widths: &[usize],
        dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if share_depth > MAX_SHARE_DEPTH {
            return Err(Error::config(
                "share_depth",
                format!("must be in 0..={MAX_SHARE_DEPTH}, got {share_depth}"),
            ));
        }
        if backbone_widths.len() < MAX_SHARE_DEPTH || widths.is_empty() {
            return Err(Error::config(
                "recog.widths",
                "need four backbone widths and at least one residual width",
            ));
        }
        let mut channels = if share_depth == 0 {
            image_channels
        } else {
            backbone_widths[share_depth - 1]
        };
        let mut front = Vec::new();
        for (k, &out) in backbone_widths[..MAX_SHARE_DEPTH]
            .iter()
            .enumerate()
            .skip(share_depth)
        {
            front.push(Conv2d::new(&format!("{name}.conv{}", k + 1), channels, out, 3, 1, 1, rng));
            channels = out;
        }
        let mut blocks = Vec::new();
        for (i, &out) in widths.iter().enumerate() {
            blocks.push(ResidualBlock::new(&format!("{name}.res{}", i + 1), channels, out, stride_of(i), rng));
            channels = out;
        }
        let fc = Linear::new(&format!("{name}.fc"), channels, dim, rng);
        Ok(SNet { front, blocks, fc })
    }

    /// Channels the network expects from the shared features.
    pub fn in_channels(&self) -> usize {
        match self.front.first() {
            Some(c) => c.weight.value.shape()[1],
            None => self.blocks[0].conv1.weight.value.shape()[1],
        }
    }

    pub fn dim(&self) -> usize {
        self.fc.bias.value.len()
    }

    /// `[R, C, H, W]` region features to `[R, D]` embeddings.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, SNetCache<T>)> {
        let mut cur = x.clone();
        let mut front_in = Vec::with_capacity(self.front.len());
        let mut front_out = Vec::with_capacity(self.front.len());
        for conv in &self.front {
            let y = relu_forward(&conv.forward(&cur)?);
            front_in.push(std::mem::replace(&mut cur, y.clone()));
            front_out.push(y);
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(&cur)?;
            blocks.push(cache);
            cur = y;
        }
        let (r, c, h, w) = cur.dims4("snet")?;
        let area = T::of((h * w) as f64);
        let mut pooled = Tensor::zeros(&[r, c]);
        for (i, p) in pooled.data_mut().iter_mut().enumerate() {
            *p = cur.data()[i * h * w..(i + 1) * h * w].iter().copied().sum::<T>() / area;
        }
        let emb = self.fc.forward(&pooled)?;
        Ok((
            emb,
            SNetCache {
                front_in,
                front_out,
                blocks,
                pooled,
                spatial: cur.shape().to_vec(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &SNetCache<T>, grad_emb: &Tensor<T>) -> Result<Tensor<T>> {
        let g_pooled = self.fc.backward(&cache.pooled, grad_emb)?;
        let (h, w) = (cache.spatial[2], cache.spatial[3]);
        let area = T::of((h * w) as f64);
        let mut g = Tensor::zeros(&cache.spatial);
        for (i, &gp) in g_pooled.data().iter().enumerate() {
            g.data_mut()[i * h * w..(i + 1) * h * w]
                .iter_mut()
                .for_each(|v| *v = gp / area);
        }
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = block.backward(bc, &g, true)?.expect("input gradient requested");
        }
        for (k, conv) in self.front.iter_mut().enumerate().rev() {
            let g_pre = relu_backward(&g, &cache.front_out[k])?;
            g = conv
                .backward(&cache.front_in[k], &g_pre, true)?
                .expect("input gradient requested");
        }
        Ok(g)
    }
}

impl<T: Real> Module<T> for SNet<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.front.iter().for_each(|c| c.visit_params(f));
        self.blocks.iter().for_each(|b| b.visit_params(f));
        self.fc.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.front.iter_mut().for_each(|c| c.visit_params_mut(f));
        self.blocks.iter_mut().for_each(|b| b.visit_params_mut(f));
        self.fc.visit_params_mut(f);
    }
}
