use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::dot;

/// `output = input · weight + bias` with `weight` laid out `[in, out]`.
pub fn fc_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, d) = input.dims2("fc_forward")?;
    let (wd, m) = weight.dims2("fc_forward")?;
    if wd != d || bias.len() != m {
        return Err(Error::dim(
            "fc_forward",
            format!(
                "input {:?}, weight {:?}, bias {:?}",
                input.shape(),
                weight.shape(),
                bias.shape()
            ),
        ));
    }
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let row = out.outer_mut(i);
        row.copy_from_slice(bias.data());
        for (j, &x) in input.outer(i).iter().enumerate() {
            let wrow = &weight.data()[j * m..(j + 1) * m];
            for (o, &wv) in row.iter_mut().zip(wrow) {
                *o += x * wv;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FcGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fc_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<FcGrads<T>> {
    let (n, d) = input.dims2("fc_backward")?;
    let (wd, m) = weight.dims2("fc_backward")?;
    if wd != d || grad_out.shape() != [n, m] {
        return Err(Error::dim(
            "fc_backward",
            format!(
                "grad_out {:?}, input {:?}, weight {:?}",
                grad_out.shape(),
                input.shape(),
                weight.shape()
            ),
        ));
    }
    let mut gi = Tensor::zeros(&[n, d]);
    let mut gw = Tensor::zeros(&[d, m]);
    let mut gb = Tensor::zeros(&[m]);
    for i in 0..n {
        let g = grad_out.outer(i);
        for (b, &v) in gb.data_mut().iter_mut().zip(g) {
            *b += v;
        }
        let x = input.outer(i);
        for j in 0..d {
            let wrow = &weight.data()[j * m..(j + 1) * m];
            gi.outer_mut(i)[j] = dot(g, wrow);
            let xj = x[j];
            let gwrow = &mut gw.data_mut()[j * m..(j + 1) * m];
            for (w, &gv) in gwrow.iter_mut().zip(g) {
                *w += xj * gv;
            }
        }
    }
    Ok(FcGrads {
        input: gi,
        weight: gw,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_outputs_bias() {
        let x = Tensor::from_vec(&[3, 4], (0..12).map(|v| v as f32 * 0.3 - 1.0).collect()).unwrap();
        let w = Tensor::zeros(&[4, 6]);
        let b = Tensor::from_vec(&[6], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let y = fc_forward(&x, &w, &b).unwrap();
        for i in 0..3 {
            assert_eq!(y.outer(i), b.data());
        }
    }

    #[test]
    fn identity_weight() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0f64, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let y = fc_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn matches_nested_matmul() {
        let x = Tensor::from_vec(&[2, 3], vec![0.5f64, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap();
        let w = Tensor::from_vec(
            &[3, 4],
            vec![0.1, 0.2, -0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, -1.0, 1.1, 1.2],
        )
        .unwrap();
        let b = Tensor::from_vec(&[4], vec![0.01, -0.02, 0.03, -0.04]).unwrap();
        let y = fc_forward(&x, &w, &b).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                let mut acc = b.data()[j];
                for k in 0..3 {
                    acc += x.data()[i * 3 + k] * w.data()[k * 4 + j];
                }
                assert_eq!(y.data()[i * 4 + j], acc);
            }
        }
    }

    #[test]
    fn inner_dimension_mismatch() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        assert!(fc_forward(&x, &Tensor::zeros(&[4, 2]), &Tensor::zeros(&[2])).is_err());
        assert!(fc_forward(&x, &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[3])).is_err());
    }
}
