use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Box-regression loss. `L2` is the default; `SmoothL1` uses the usual
/// unit transition point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegressionLoss {
    #[default]
    L2,
    SmoothL1,
}

impl FromStr for RegressionLoss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "l2" => Ok(Self::L2),
            "smooth_l1" => Ok(Self::SmoothL1),
            other => Err(format!("expected `l2` or `smooth_l1`, got `{other}`")),
        }
    }
}

impl fmt::Display for RegressionLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L2 => "l2",
            Self::SmoothL1 => "smooth_l1",
        })
    }
}

/// Mean element-wise regression loss and its gradient w.r.t. `pred`.
pub fn regression_loss<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mode: RegressionLoss,
) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "regression_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let count = T::of(pred.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        let (l, g) = match mode {
            RegressionLoss::L2 => (d * d, T::of(2.0) * d),
            RegressionLoss::SmoothL1 => {
                if d.abs() < T::one() {
                    (T::of(0.5) * d * d, d)
                } else {
                    (d.abs() - T::of(0.5), d.signum())
                }
            }
        };
        loss += l;
        grad.push(g / count);
    }
    Ok((loss / count, Tensor::from_vec(pred.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_give_zero() {
        let p = Tensor::from_vec(&[2, 4], vec![0.1f32, -0.2, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        for mode in [RegressionLoss::L2, RegressionLoss::SmoothL1] {
            let (l, g) = regression_loss(&p, &p, mode).unwrap();
            assert_eq!(l, 0.0);
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unit_offset_l2() {
        let p = Tensor::<f64>::full(&[3, 4], 2.0);
        let t = Tensor::full(&[3, 4], 1.0);
        let (l, g) = regression_loss(&p, &t, RegressionLoss::L2).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.data().iter().all(|&v| (v - 2.0 / 12.0).abs() < 1e-15));
    }

    #[test]
    fn smooth_l1_branches() {
        let p = Tensor::from_vec(&[2], vec![0.5f64, 3.0]).unwrap();
        let t = Tensor::zeros(&[2]);
        let (l, g) = regression_loss(&p, &t, RegressionLoss::SmoothL1).unwrap();
        assert!((l - (0.125 + 2.5) / 2.0).abs() < 1e-15);
        assert_eq!(g.data(), &[0.25, 0.5]);
    }
}
