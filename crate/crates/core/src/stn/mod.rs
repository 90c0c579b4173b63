//! Spatial transformer: affine grid, bilinear sampling and their gradients.

mod grid;
mod head;
mod sampler;
mod theta;

pub use grid::{affine_grid, theta_backward, SampleGrid};
pub use head::{
    LocCache, LocalizationHead, SpatialTransformer, StnCache, StnMode, LOC_FILTERS, LOC_KERNEL,
    LOC_POOL,
};
pub use sampler::{bilinear_sample_backward, bilinear_sample_forward, SamplerGrads};
pub use theta::AffineTheta;
