//! Tensor kernels with hand-derived backward passes.

mod activation;
mod conv;
mod layers;
mod linear;
mod loss;
mod pool;

pub use activation::{relu_backward, relu_forward, softmax_forward, softmax_xent_loss};
pub use conv::{conv2d_backward, conv2d_backward_opt, conv2d_forward, Conv2dGrads, ConvGeometry};
pub use layers::{he_uniform, Conv2d, Linear, Module, Param};
pub use linear::{fc_backward, fc_forward, FcGrads};
pub use loss::{regression_loss, RegressionLoss};
pub use pool::{maxpool2d_backward, maxpool2d_forward};

use crate::tensor::Real;

/// Dot product with eight independent accumulators so the loop vectorizes.
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut acc = lanes.iter().copied().sum::<T>();
    for i in chunks * 8..a.len() {
        acc += a[i] * b[i];
    }
    acc
}
