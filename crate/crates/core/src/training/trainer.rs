//! The staged training loop over a [`FaceNet`].

use std::collections::BTreeMap;

use crate::data::{DataSource, DatasetKind};
use crate::error::{Error, Result};
use crate::model::{FaceNet, Trainable};
use crate::numerics::Module;
use crate::seed;
use crate::tensor::Tensor;

use super::{
    grad_norm, scale_grads, step_lr, BranchLosses, BranchWeights, Checkpoint, LossWeights,
    MetricsRow, Sgd, StageSchedule, StepStats, MOMENTUM_SUFFIX,
};

/// Name fragment shared by the localization-head parameters of both
/// transformers.
pub const STN_PARAMS: &str = ".stn.";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub gamma: f64,
    pub stepsize: u64,
    pub momentum: f64,
    /// Backward passes averaged into one optimizer step.
    pub iter_size: usize,
    /// Optimizer steps in the whole schedule.
    pub max_iter: u64,
    /// End of the detection-only and of the joint stage, as fractions of `max_iter`.
    pub stage_fractions: (f64, f64),
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Learning-rate multiplier of the transformers' localization heads.
    pub stn_lr_mult: f64,
    pub weights: LossWeights,
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.1,
            gamma: 0.1,
            stepsize: 20_000,
            momentum: 0.9,
            iter_size: 32,
            max_iter: 100_000,
            stage_fractions: (0.5, 0.8),
            clip_norm: Some(10.0),
            stn_lr_mult: 1.0,
            weights: LossWeights::default(),
            checkpoint_interval: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return Err(Error::config("solver.base_lr", "must be finite and non-negative"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config("solver.gamma", "must be positive"));
        }
        if self.stepsize == 0 {
            return Err(Error::config("solver.stepsize", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("solver.momentum", "must be in [0, 1)"));
        }
        if self.iter_size == 0 {
            return Err(Error::config("solver.iter_size", "must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("solver.clip_norm", "must be positive (0 disables)"));
            }
        }
        if !(self.stn_lr_mult.is_finite() && self.stn_lr_mult >= 0.0) {
            return Err(Error::config("solver.stn_lr_mult", "must be finite and non-negative"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::config("train.checkpoint_interval", "must be at least 1"));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<StageSchedule> {
        let (f1, f2) = self.stage_fractions;
        StageSchedule::three_stage(self.max_iter, f1, f2, self.weights)
    }

    pub fn lr_at(&self, iter: u64) -> f64 {
        step_lr(self.base_lr, self.gamma, self.stepsize, iter)
    }
}

/// What an optimizer step is about to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub iter: u64,
    pub stage: usize,
    pub dataset: DatasetKind,
    pub weights: BranchWeights,
    pub trainable: Trainable,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub info: StepInfo,
    pub row: MetricsRow,
    pub stats: StepStats,
}

pub struct Trainer<'a, D: DataSource + ?Sized> {
    pub net: FaceNet<f32>,
    pub opt: Sgd<f32>,
    cfg: TrainConfig,
    schedule: StageSchedule,
    data: &'a D,
    seed: u64,
    iter: u64,
}

impl<'a, D: DataSource + ?Sized> Trainer<'a, D> {
    pub fn new(net: FaceNet<f32>, data: &'a D, cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let schedule = cfg.schedule()?;
        Ok(Trainer {
            net,
            opt: Sgd::new(cfg.momentum as f32).with_lr_mult(STN_PARAMS, cfg.stn_lr_mult as f32),
            cfg,
            schedule,
            data,
            seed,
            iter: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &StageSchedule {
        &self.schedule
    }

    /// Optimizer steps taken so far.
    pub fn iter(&self) -> u64 {
        self.iter
    }

    pub fn done(&self) -> bool {
        self.iter >= self.cfg.max_iter
    }

    pub fn step(&mut self) -> Result<StepReport> {
        self.step_inspect(|_, _| {})
    }

    /// One optimizer step. `inspect` sees the averaged gradients before
    /// clipping and the update.
    pub fn step_inspect(
        &mut self,
        inspect: impl FnOnce(&FaceNet<f32>, &StepInfo),
    ) -> Result<StepReport> {
        let iter = self.iter;
        let (stage_idx, stage) = match self.schedule.stage_index(iter) {
            Some(i) => (i, &self.schedule.stages[i]),
            None => return Err(Error::Input(format!("iteration {iter} is past the schedule"))),
        };
        let dataset = self.schedule.dataset_at(iter).expect("stage exists");
        let selected = |n: &str| stage.trains(n);
        let info = StepInfo {
            iter,
            stage: stage_idx,
            dataset,
            weights: self.schedule.weights.for_dataset(dataset),
            trainable: Trainable::from_selector(&selected),
            lr: self.cfg.lr_at(iter),
        };

        let n = self.cfg.iter_size;
        self.net.zero_grads();
        let mut losses = BranchLosses::default();
        for k in 0..n {
            let index = iter * n as u64 + k as u64;
            let sample = self.data.sample(dataset, index)?;
            let mut rng = seed::rng(self.seed, "sampling", &[iter, k as u64]);
            let l = self.net.train_sample(&sample, info.weights, info.trainable, &mut rng)?;
            losses.add(&l);
        }
        losses.scale(1.0 / n as f64);
        if n > 1 {
            scale_grads(&mut self.net, 1.0 / n as f32);
        }
        inspect(&self.net, &info);

        let norm = grad_norm(&self.net, &selected);
        let clipped = match self.cfg.clip_norm {
            Some(max) if norm > max => {
                scale_grads(&mut self.net, (max / norm) as f32);
                true
            }
            _ => false,
        };
        self.opt.step(&mut self.net, info.lr as f32, &selected)?;
        self.iter += 1;
        Ok(StepReport {
            info,
            row: MetricsRow {
                iter,
                stage: stage_idx,
                lr: info.lr,
                losses,
                dataset,
            },
            stats: StepStats {
                grad_norm: norm,
                clipped,
            },
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut shapes = BTreeMap::new();
        self.net.visit_params(&mut |p| {
            shapes.insert(p.name.clone(), p.value.shape().to_vec());
        });
        let momentum = self
            .opt
            .velocity
            .iter()
            .map(|(name, v)| {
                let t = Tensor::from_vec(&shapes[name], v.clone()).expect("velocity matches its parameter");
                (format!("{name}{MOMENTUM_SUFFIX}"), t)
            })
            .collect();
        Checkpoint {
            params: self.net.export_params(),
            momentum,
            iter: self.iter,
        }
    }

    /// Continue from a checkpoint of the same architecture.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.iter > self.cfg.max_iter {
            return Err(Error::StateMismatch(format!(
                "checkpoint is at iteration {}, beyond max_iter {}",
                ckpt.iter, self.cfg.max_iter
            )));
        }
        let mut lens = BTreeMap::new();
        self.net.visit_params(&mut |p| {
            lens.insert(p.name.clone(), p.value.len());
        });
        let mut velocity = BTreeMap::new();
        for (name, t) in &ckpt.momentum {
            let base = name.strip_suffix(MOMENTUM_SUFFIX).unwrap_or(name);
            match lens.get(base) {
                Some(&len) if len == t.len() => {
                    velocity.insert(base.to_string(), t.data().to_vec());
                }
                _ => {
                    return Err(Error::StateMismatch(format!(
                        "optimizer state `{name}` does not match any parameter"
                    )))
                }
            }
        }
        self.net.import_params(&ckpt.params)?;
        self.opt.velocity = velocity;
        self.iter = ckpt.iter;
        Ok(())
    }
}
