//! Box classification and regression over ROI-pooled features, with a
//! spatial transformer between the pooling and the fully connected layers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    regression_loss, relu_backward, relu_forward, softmax_xent_loss, Linear, Module, Param,
    RegressionLoss,
};
use crate::stn::{SpatialTransformer, StnCache, StnMode};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct DetectionHead<T = f32> {
    pub stn: SpatialTransformer<T>,
    pub fc6: Linear<T>,
    pub fc7: Linear<T>,
    pub cls: Linear<T>,
    pub bbox: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct DetCache<T> {
    stn: StnCache<T>,
    flat: Tensor<T>,
    h6: Tensor<T>,
    h7: Tensor<T>,
    pooled_shape: Vec<usize>,
}

impl<T: Real> DetCache<T> {
    pub fn stn(&self) -> &StnCache<T> {
        &self.stn
    }
}

impl<T: Real> DetectionHead<T> {
    pub fn new(
        name: &str,
        channels: usize,
        pool: (usize, usize),
        width: usize,
        mode: StnMode,
        rng: &mut impl Rng,
    ) -> Self {
        let flat = channels * pool.0 * pool.1;
        DetectionHead {
            stn: SpatialTransformer::new(&format!("{name}.stn"), channels, pool, mode, rng),
            fc6: Linear::new(&format!("{name}.fc6"), flat, width, rng),
            fc7: Linear::new(&format!("{name}.fc7"), width, width, rng),
            cls: Linear::new(&format!("{name}.cls"), width, 2, rng),
            bbox: Linear::new(&format!("{name}.bbox"), width, 4, rng),
        }
    }

    /// Returns `(logits [R, 2], deltas [R, 4])`.
    pub fn forward(&self, pooled: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, DetCache<T>)> {
        let (r, c, h, w) = pooled.dims4("detection_head")?;
        let (aligned, stn) = self.stn.forward(pooled)?;
        let flat = aligned.reshape(&[r, c * h * w])?;
        if flat.shape()[1] != self.fc6.inputs() {
            return Err(Error::dim(
                "detection_head",
                format!("pooled {:?} for {} inputs", pooled.shape(), self.fc6.inputs()),
            ));
        }
        let h6 = relu_forward(&self.fc6.forward(&flat)?);
        let h7 = relu_forward(&self.fc7.forward(&h6)?);
        let logits = self.cls.forward(&h7)?;
        let deltas = self.bbox.forward(&h7)?;
        Ok((
            logits,
            deltas,
            DetCache {
                stn,
                flat,
                h6,
                h7,
                pooled_shape: pooled.shape().to_vec(),
            },
        ))
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the
    /// pooled features.
    pub fn backward(
        &mut self,
        cache: &DetCache<T>,
        grad_logits: &Tensor<T>,
        grad_deltas: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let mut g7 = self.cls.backward(&cache.h7, grad_logits)?;
        g7.add_assign(&self.bbox.backward(&cache.h7, grad_deltas)?)?;
        let g7 = relu_backward(&g7, &cache.h7)?;
        let g6 = relu_backward(&self.fc7.backward(&cache.h6, &g7)?, &cache.h6)?;
        let g_flat = self.fc6.backward(&cache.flat, &g6)?;
        let g_aligned = g_flat.reshape(&cache.pooled_shape)?;
        self.stn.backward(&cache.stn, &g_aligned)
    }
}

impl<T: Real> Module<T> for DetectionHead<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.stn.visit_params(f);
        self.fc6.visit_params(f);
        self.fc7.visit_params(f);
        self.cls.visit_params(f);
        self.bbox.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.stn.visit_params_mut(f);
        self.fc6.visit_params_mut(f);
        self.fc7.visit_params_mut(f);
        self.cls.visit_params_mut(f);
        self.bbox.visit_params_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct DetLoss<T> {
    pub cls: T,
    pub reg: T,
    pub grad_logits: Tensor<T>,
    pub grad_deltas: Tensor<T>,
}

impl<T: Real> DetLoss<T> {
    pub fn total(&self) -> T {
        self.cls + self.reg
    }

    pub fn scaled(mut self, w: T) -> Self {
        self.cls *= w;
        self.reg *= w;
        self.grad_logits = self.grad_logits.map(|g| g * w);
        self.grad_deltas = self.grad_deltas.map(|g| g * w);
        self
    }
}

/// Softmax over `{background, face}` for every region plus regression loss
/// over face regions.
pub fn det_loss<T: Real>(
    logits: &Tensor<T>,
    deltas: &Tensor<T>,
    labels: &[usize],
    targets: &[[f32; 4]],
    mode: RegressionLoss,
) -> Result<DetLoss<T>> {
    let (cls, grad_logits) = softmax_xent_loss(logits, labels)?;
    let mut grad_deltas = Tensor::zeros(deltas.shape());
    let fg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut reg = T::zero();
    if !fg.is_empty() {
        let pred: Vec<T> = fg.iter().flat_map(|&i| deltas.outer(i).to_vec()).collect();
        let tgt: Vec<T> = fg
            .iter()
            .flat_map(|&i| targets[i].map(|v| T::of(v as f64)))
            .collect();
        let shape = [fg.len(), 4];
        let (l, g) = regression_loss(
            &Tensor::from_vec(&shape, pred)?,
            &Tensor::from_vec(&shape, tgt)?,
            mode,
        )?;
        reg = l;
        for (row, &i) in fg.iter().enumerate() {
            grad_deltas.outer_mut(i).copy_from_slice(g.outer(row));
        }
    }
    Ok(DetLoss {
        cls,
        reg,
        grad_logits,
        grad_deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stn_is_transparent_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let learned = DetectionHead::<f64>::new("det", 3, (7, 7), 16, StnMode::Learned, &mut rng);
        let mut plain = learned.clone();
        plain.stn.mode = StnMode::Identity;
        let x = Tensor::from_vec(&[2, 3, 7, 7], (0..294).map(|v| (v as f64 * 0.3).sin()).collect())
            .unwrap();
        let (l1, d1, _) = learned.forward(&x).unwrap();
        let (l2, d2, _) = plain.forward(&x).unwrap();
        assert_eq!(l1.data(), l2.data());
        assert_eq!(d1.data(), d2.data());
    }

    #[test]
    fn zero_features_give_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut head = DetectionHead::<f32>::new("det", 2, (7, 7), 8, StnMode::Learned, &mut rng);
        head.cls.bias.value.data_mut().copy_from_slice(&[0.3, -0.2]);
        head.bbox.bias.value.data_mut().copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
        let (l, d, _) = head.forward(&Tensor::zeros(&[1, 2, 7, 7])).unwrap();
        assert_eq!(l.data(), &[0.3, -0.2]);
        assert_eq!(d.data(), &[0.1, 0.2, 0.3, 0.4]);
    }
}
