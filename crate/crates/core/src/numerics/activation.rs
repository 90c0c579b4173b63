use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its *output* (positive exactly where the input was).
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != output.shape() {
        return Err(Error::dim(
            "relu_backward",
            format!("{:?} vs {:?}", grad_out.shape(), output.shape()),
        ));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

/// Row-wise softmax of `[N, M]` logits.
pub fn softmax_forward<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, _) = logits.dims2("softmax_forward")?;
    let mut probs = logits.clone();
    for i in 0..n {
        let row = probs.outer_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / total);
    }
    Ok(probs)
}

/// Mean negative log-likelihood of `labels` under softmax(`logits`), with
/// gradient `(probs - onehot) / N`.
pub fn softmax_xent_loss<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (n, m) = logits.dims2("softmax_xent_loss")?;
    if labels.len() != n {
        return Err(Error::dim(
            "softmax_xent_loss",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
        return Err(Error::Index {
            what: "class label",
            index: bad,
            bound: m,
        });
    }
    let mut grad = softmax_forward(logits)?;
    let scale = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        // log-sum-exp form keeps saturated rows finite.
        let row = logits.outer(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[label];
        let g = grad.outer_mut(i);
        g[label] -= T::one();
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_m() {
        let logits = Tensor::<f64>::full(&[3, 5], 0.3);
        let (loss, _) = softmax_xent_loss(&logits, &[0, 2, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_class() {
        let logits = Tensor::from_vec(&[1, 2], vec![10.0f32, -10.0]).unwrap();
        let (loss, _) = softmax_xent_loss(&logits, &[0]).unwrap();
        assert!(loss < 1e-4);
    }

    #[test]
    fn rows_sum_to_one_and_shift_invariance() {
        let logits =
            Tensor::from_vec(&[2, 4], vec![1.0f32, -3.0, 20.0, 0.5, -50.0, 2.0, 2.0, 7.0]).unwrap();
        let p = softmax_forward(&logits).unwrap();
        for i in 0..2 {
            let s: f32 = p.outer(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
        }
        let shifted = logits.map(|v| v + 12.5);
        let (a, _) = softmax_xent_loss(&logits, &[2, 1]).unwrap();
        let (b, _) = softmax_xent_loss(&shifted, &[2, 1]).unwrap();
        assert!((a - b).abs() <= 1e-5);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::<f32>::zeros(&[1, 3]);
        assert!(matches!(
            softmax_xent_loss(&logits, &[3]),
            Err(Error::Index { index: 3, bound: 3, .. })
        ));
    }

    #[test]
    fn relu_masks_by_output() {
        let x = Tensor::from_vec(&[4], vec![-1.0f32, 0.0, 0.5, 2.0]).unwrap();
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 0.5, 2.0]);
        let g = relu_backward(&Tensor::full(&[4], 3.0), &y).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 3.0, 3.0]);
    }
}
