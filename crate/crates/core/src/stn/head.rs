//! Localization network regressing one theta per region, and the complete
//! transformer (localization + grid + sampler) with its backward pass.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{maxpool2d_backward, maxpool2d_forward, Conv2d, Linear, Module, Param};
use crate::tensor::{Real, Tensor};

use super::{
    affine_grid, bilinear_sample_backward, bilinear_sample_forward, theta_backward, AffineTheta,
    SampleGrid,
};

pub const LOC_FILTERS: usize = 20;
pub const LOC_KERNEL: usize = 5;
pub const LOC_POOL: usize = 2;

/// conv(20, k=5, s=1) -> maxpool(2) -> FC(6). The FC starts at zero weight
/// with identity bias, so every region's theta is the identity at init.
#[derive(Debug, Clone)]
pub struct LocalizationHead<T = f32> {
    pub conv: Conv2d<T>,
    pub fc: Linear<T>,
    in_size: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct LocCache<T> {
    input: Tensor<T>,
    conv_out_shape: Vec<usize>,
    argmax: Vec<usize>,
    flat: Tensor<T>,
}

impl<T: Real> LocalizationHead<T> {
    pub fn new(name: &str, channels: usize, in_size: (usize, usize), rng: &mut impl Rng) -> Self {
        let conv = Conv2d::new(&format!("{name}.conv"), channels, LOC_FILTERS, LOC_KERNEL, 1, 0, rng);
        let ch = (in_size.0 - LOC_KERNEL + 1 - LOC_POOL) / LOC_POOL + 1;
        let cw = (in_size.1 - LOC_KERNEL + 1 - LOC_POOL) / LOC_POOL + 1;
        let fc = Linear::with_bias(
            &format!("{name}.fc"),
            LOC_FILTERS * ch * cw,
            AffineTheta::<T>::identity().params(),
        );
        LocalizationHead { conv, fc, in_size }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Vec<AffineTheta<T>>, LocCache<T>)> {
        let (r, _, h, w) = x.dims4("localization_head")?;
        if (h, w) != self.in_size {
            return Err(Error::dim(
                "localization_head",
                format!("expected {:?} regions, got {h}x{w}", self.in_size),
            ));
        }
        let conv_out = self.conv.forward(x)?;
        let (pooled, argmax) = maxpool2d_forward(&conv_out, LOC_POOL, LOC_POOL)?;
        let flat = pooled.reshape(&[r, self.fc.inputs()])?;
        let out = self.fc.forward(&flat)?;
        let thetas = (0..r)
            .map(|i| {
                let row = out.outer(i);
                AffineTheta([row[0], row[1], row[2], row[3], row[4], row[5]])
            })
            .collect();
        Ok((
            thetas,
            LocCache {
                input: x.clone(),
                conv_out_shape: conv_out.shape().to_vec(),
                argmax,
                flat,
            },
        ))
    }

    pub fn backward(&mut self, cache: &LocCache<T>, grad_thetas: &[[T; 6]]) -> Result<Tensor<T>> {
        let r = grad_thetas.len();
        let g = Tensor::from_vec(&[r, 6], grad_thetas.iter().flatten().copied().collect())?;
        let g_flat = self.fc.backward(&cache.flat, &g)?;
        let pooled_shape = {
            let s = &cache.conv_out_shape;
            [s[0], s[1], (s[2] - LOC_POOL) / LOC_POOL + 1, (s[3] - LOC_POOL) / LOC_POOL + 1]
        };
        let g_pooled = g_flat.reshape(&pooled_shape)?;
        let g_conv = maxpool2d_backward(&g_pooled, &cache.argmax, &cache.conv_out_shape)?;
        Ok(self
            .conv
            .backward(&cache.input, &g_conv, true)?
            .expect("input gradient requested"))
    }
}

impl<T: Real> Module<T> for LocalizationHead<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.conv.visit_params(f);
        self.fc.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv.visit_params_mut(f);
        self.fc.visit_params_mut(f);
    }
}

/// Whether the transformer predicts theta or is pinned to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StnMode {
    #[default]
    Learned,
    Identity,
}

impl FromStr for StnMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "learned" => Ok(Self::Learned),
            "identity" => Ok(Self::Identity),
            other => Err(format!("expected `learned` or `identity`, got `{other}`")),
        }
    }
}

impl fmt::Display for StnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Learned => "learned",
            Self::Identity => "identity",
        })
    }
}

/// Region-wise spatial transformer. Output size equals the input region size.
#[derive(Debug, Clone)]
pub struct SpatialTransformer<T = f32> {
    pub head: LocalizationHead<T>,
    pub mode: StnMode,
}

#[derive(Debug, Clone)]
pub struct StnCache<T> {
    input: Tensor<T>,
    pub thetas: Vec<AffineTheta<T>>,
    grid: Option<SampleGrid<T>>,
    loc: Option<LocCache<T>>,
}

impl<T: Real> SpatialTransformer<T> {
    pub fn new(
        name: &str,
        channels: usize,
        size: (usize, usize),
        mode: StnMode,
        rng: &mut impl Rng,
    ) -> Self {
        SpatialTransformer {
            head: LocalizationHead::new(name, channels, size, rng),
            mode,
        }
    }

    pub fn forward(&self, u: &Tensor<T>) -> Result<(Tensor<T>, StnCache<T>)> {
        let (r, _, h, w) = u.dims4("spatial_transformer")?;
        if self.mode == StnMode::Identity {
            return Ok((
                u.clone(),
                StnCache {
                    input: u.clone(),
                    thetas: vec![AffineTheta::identity(); r],
                    grid: None,
                    loc: None,
                },
            ));
        }
        let (thetas, loc) = self.head.forward(u)?;
        let grid = affine_grid(&thetas, (h, w), (h, w));
        let v = bilinear_sample_forward(u, &grid)?;
        Ok((
            v,
            StnCache {
                input: u.clone(),
                thetas,
                grid: Some(grid),
                loc: Some(loc),
            },
        ))
    }

    /// Gradient w.r.t. the transformer input: the sampler path plus the path
    /// through theta and the localization head.
    pub fn backward(&mut self, cache: &StnCache<T>, grad_v: &Tensor<T>) -> Result<Tensor<T>> {
        let (Some(grid), Some(loc)) = (&cache.grid, &cache.loc) else {
            return Ok(grad_v.clone());
        };
        let g = bilinear_sample_backward(grad_v, &cache.input, grid)?;
        let g_theta = theta_backward(&g.coords, grid.out_size, grid.src_size)?;
        let mut g_input = self.head.backward(loc, &g_theta)?;
        g_input.add_assign(&g.input)?;
        Ok(g_input)
    }
}

impl<T: Real> Module<T> for SpatialTransformer<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.head.visit_params_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_is_identity_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = LocalizationHead::<f32>::new("stn", 4, (7, 7), &mut rng);
        let x = Tensor::from_vec(&[3, 4, 7, 7], (0..588).map(|v| (v as f32).cos() * 5.0).collect())
            .unwrap();
        let (thetas, _) = head.forward(&x).unwrap();
        assert!(thetas.iter().all(AffineTheta::is_identity));
    }

    #[test]
    fn zero_input_yields_fc_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut head = LocalizationHead::<f64>::new("stn", 2, (7, 7), &mut rng);
        let bias = [0.9, 0.1, -0.2, 0.05, 1.1, 0.3];
        head.fc.bias.value.data_mut().copy_from_slice(&bias);
        for w in head.fc.weight.value.data_mut() {
            *w = 0.25;
        }
        // Zero input -> conv output is its (zero) bias -> pooled zeros -> FC bias.
        let (thetas, _) = head.forward(&Tensor::zeros(&[2, 2, 7, 7])).unwrap();
        assert_eq!(thetas[0].0, bias);
        assert_eq!(thetas[1].0, bias);
    }

    #[test]
    fn wrong_region_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = LocalizationHead::<f32>::new("stn", 1, (7, 7), &mut rng);
        assert!(matches!(
            head.forward(&Tensor::zeros(&[1, 1, 6, 6])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn stn_is_noop_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stn = SpatialTransformer::<f32>::new("stn", 3, (7, 7), StnMode::Learned, &mut rng);
        let u = Tensor::from_vec(&[2, 3, 7, 7], (0..294).map(|v| (v as f32 * 0.1).sin()).collect())
            .unwrap();
        let (v, _) = stn.forward(&u).unwrap();
        assert_eq!(v.data(), u.data());
    }
}
