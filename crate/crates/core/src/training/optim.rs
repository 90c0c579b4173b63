//! Step learning-rate policy, heavy-ball SGD and gradient accumulation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Module, Param};
use crate::tensor::Real;

/// `base_lr * gamma^floor(iter / stepsize)`.
pub fn step_lr(base_lr: f64, gamma: f64, stepsize: u64, iter: u64) -> f64 {
    assert!(stepsize >= 1, "stepsize must be at least 1");
    base_lr * gamma.powi((iter / stepsize) as i32)
}

/// `v = momentum * v + lr * grad; param -= v`.
pub fn sgd_momentum_update<T: Real>(param: &mut [T], grad: &[T], velocity: &mut [T], lr: T, momentum: T) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + lr * g;
        *p -= *v;
    }
}

/// Velocity buffers keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T = f32> {
    pub momentum: T,
    pub velocity: BTreeMap<String, Vec<T>>,
    /// Learning-rate multipliers for parameters whose name contains the
    /// fragment; the first match wins.
    pub lr_mults: Vec<(String, T)>,
}

impl<T: Real> Sgd<T> {
    pub fn new(momentum: T) -> Self {
        Sgd {
            momentum,
            velocity: BTreeMap::new(),
            lr_mults: Vec::new(),
        }
    }

    pub fn with_lr_mult(mut self, fragment: &str, mult: T) -> Self {
        self.lr_mults.push((fragment.to_string(), mult));
        self
    }

    /// Apply one update to every parameter `selected` accepts. Parameters
    /// marked frozen are left untouched.
    pub fn step<M: Module<T> + ?Sized>(
        &mut self,
        model: &mut M,
        lr: T,
        selected: &dyn Fn(&str) -> bool,
    ) -> Result<()> {
        let mut failure = None;
        let momentum = self.momentum;
        let lr_mults = &self.lr_mults;
        model.visit_params_mut(&mut |p: &mut Param<T>| {
            if p.frozen || !selected(&p.name) || failure.is_some() {
                return;
            }
            let len = p.value.len();
            let v = self
                .velocity
                .entry(p.name.clone())
                .or_insert_with(|| vec![T::zero(); len]);
            if v.len() != len {
                failure = Some(Error::StateMismatch(format!(
                    "momentum for `{}` has {} values, parameter has {len}",
                    p.name,
                    v.len()
                )));
                return;
            }
            // A parameter no pass has touched yet has zero gradient but still
            // coasts on its velocity.
            let g = p.value.grad().map_or_else(|| vec![T::zero(); len], <[T]>::to_vec);
            let mult = lr_mults
                .iter()
                .find(|(f, _)| p.name.contains(f.as_str()))
                .map_or(T::one(), |(_, m)| *m);
            sgd_momentum_update(p.value.data_mut(), &g, v, lr * mult, momentum);
        });
        failure.map_or(Ok(()), Err)
    }
}

/// L2 norm of all gradients of parameters `selected` accepts.
pub fn grad_norm<T: Real, M: Module<T> + ?Sized>(model: &M, selected: &dyn Fn(&str) -> bool) -> f64 {
    let mut sq = 0.0f64;
    model.visit_params(&mut |p| {
        if let (true, Some(g)) = (selected(&p.name), p.value.grad()) {
            sq += g.iter().map(|v| v.f64() * v.f64()).sum::<f64>();
        }
    });
    sq.sqrt()
}

pub fn scale_grads<T: Real, M: Module<T> + ?Sized>(model: &mut M, factor: T) {
    model.visit_params_mut(&mut |p| {
        if p.value.grad().is_some() {
            p.value.grad_mut().iter_mut().for_each(|g| *g *= factor);
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Gradient norm after averaging, before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// One optimizer step from `iter_size` accumulated backward passes:
/// gradients are zeroed, `micro(model, k)` runs for `k in 0..iter_size`,
/// the sum is divided by `iter_size`, optionally clipped to a global norm,
/// and applied with SGD.
pub fn accumulate_step<T: Real, M: Module<T> + ?Sized>(
    model: &mut M,
    opt: &mut Sgd<T>,
    lr: T,
    iter_size: usize,
    clip_norm: Option<f64>,
    selected: &dyn Fn(&str) -> bool,
    micro: &mut dyn FnMut(&mut M, usize) -> Result<()>,
) -> Result<StepStats> {
    if iter_size == 0 {
        return Err(Error::config("iter_size", "must be at least 1"));
    }
    model.zero_grads();
    for k in 0..iter_size {
        micro(model, k)?;
    }
    if iter_size > 1 {
        scale_grads(model, T::one() / T::of(iter_size as f64));
    }
    let norm = grad_norm(model, selected);
    let clipped = match clip_norm {
        Some(max) if norm > max => {
            scale_grads(model, T::of(max / norm));
            true
        }
        _ => false,
    };
    opt.step(model, lr, selected)?;
    Ok(StepStats {
        grad_norm: norm,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_points() {
        assert_eq!(step_lr(0.1, 0.1, 20_000, 0), 0.1);
        assert!((step_lr(0.1, 0.1, 20_000, 20_000) - 0.01).abs() < 1e-15);
        assert_eq!(step_lr(0.1, 0.1, 20_000, 19_999), 0.1);
        assert_eq!(step_lr(0.3, 1.0, 5, 1_000), 0.3);
    }

    #[test]
    fn momentum_sequence_on_quadratic() {
        // f(p) = p^2 / 2, grad = p; lr 0.1, momentum 0.9, p0 = 1.
        let (mut p, mut v) = ([1.0f64], [0.0f64]);
        let g = p;
        sgd_momentum_update(&mut p, &g, &mut v, 0.1, 0.9);
        assert!((p[0] - 0.9).abs() < 1e-15 && (v[0] - 0.1).abs() < 1e-15);
        let g = p;
        sgd_momentum_update(&mut p, &g, &mut v, 0.1, 0.9);
        // v = 0.09 + 0.09 = 0.18, p = 0.72
        assert!((v[0] - 0.18).abs() < 1e-15 && (p[0] - 0.72).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_zero_velocity_is_noop() {
        let (mut p, mut v) = ([0.5f32, -2.0], [0.0f32; 2]);
        sgd_momentum_update(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9);
        assert_eq!(p, [0.5, -2.0]);
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let (mut p, mut v) = ([1.0f64], [0.0f64]);
        sgd_momentum_update(&mut p, &[2.0], &mut v, 0.25, 0.0);
        assert_eq!(p[0], 0.5);
    }

    #[test]
    fn lr_multiplier_applies_by_name() {
        use crate::numerics::Linear;
        let mut fc = Linear::<f64>::with_bias("recog.stn.fc", 1, &[1.0]);
        fc.bias.value.grad_mut()[0] = 1.0;
        let mut opt = Sgd::new(0.0).with_lr_mult(".stn.", 0.1);
        opt.step(&mut fc, 0.5, &|_| true).unwrap();
        assert!((fc.bias.value.data()[0] - 0.95).abs() < 1e-15);

        let mut fc = Linear::<f64>::with_bias("det.fc", 1, &[1.0]);
        fc.bias.value.grad_mut()[0] = 1.0;
        opt.step(&mut fc, 0.5, &|_| true).unwrap();
        assert_eq!(fc.bias.value.data()[0], 0.5);
    }
}
