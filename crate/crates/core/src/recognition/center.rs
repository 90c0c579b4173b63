//! Center loss: pulls each embedding toward a per-identity center. Centers
//! are moved by their own damped update rule, not by the optimizer.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct CenterBank<T = f32> {
    pub centers: Tensor<T>,
}

impl<T: Real> CenterBank<T> {
    pub fn new(identities: usize, dim: usize) -> Self {
        CenterBank {
            centers: Tensor::zeros(&[identities, dim]),
        }
    }

    pub fn identities(&self) -> usize {
        self.centers.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.centers.shape()[1]
    }

    fn check(&self, emb: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
        let (n, d) = emb.dims2("center_loss")?;
        if d != self.dim() || labels.len() != n {
            return Err(Error::dim(
                "center_loss",
                format!(
                    "embeddings {:?} with {} labels against centers {:?}",
                    emb.shape(),
                    labels.len(),
                    self.centers.shape()
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.identities()) {
            return Err(Error::Index {
                what: "identity label",
                index: bad,
                bound: self.identities(),
            });
        }
        Ok((n, d))
    }

    /// `c_j -= alpha * sum_{i: y_i = j} (c_j - x_i) / (1 + n_j)`, computed
    /// from per-class sums so sample order within the batch is irrelevant.
    pub fn update(&mut self, emb: &Tensor<T>, labels: &[usize], alpha: T) -> Result<()> {
        let (_, d) = self.check(emb, labels)?;
        let k = self.identities();
        let mut sums = vec![T::zero(); k * d];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, &x) in sums[l * d..(l + 1) * d].iter_mut().zip(emb.outer(i)) {
                *s += x;
            }
        }
        for j in (0..k).filter(|&j| counts[j] > 0) {
            let n = T::of(counts[j] as f64);
            let row = &mut self.centers.data_mut()[j * d..(j + 1) * d];
            for (c, &s) in row.iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                let delta = (n * *c - s) / (T::one() + n);
                *c -= alpha * delta;
            }
        }
        Ok(())
    }
}

/// `(lambda / 2) * mean_i ||x_i - c_{y_i}||^2` and its gradient
/// `lambda * (x_i - c_{y_i}) / N`. The bank is not modified.
pub fn center_loss<T: Real>(
    emb: &Tensor<T>,
    labels: &[usize],
    bank: &CenterBank<T>,
    lambda: T,
) -> Result<(T, Tensor<T>)> {
    let (n, d) = bank.check(emb, labels)?;
    let mut grad = Tensor::zeros(emb.shape());
    if n == 0 {
        return Ok((T::zero(), grad));
    }
    let count = T::of(n as f64);
    let mut sq = T::zero();
    for (i, &l) in labels.iter().enumerate() {
        let c = &bank.centers.data()[l * d..(l + 1) * d];
        let g = grad.outer_mut(i);
        for ((gv, &x), &cv) in g.iter_mut().zip(emb.outer(i)).zip(c) {
            let r = x - cv;
            sq += r * r;
            *gv = lambda * r / count;
        }
    }
    Ok((lambda * sq / (T::of(2.0) * count), grad))
}
