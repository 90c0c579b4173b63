//! Optimization: learning-rate policy, SGD, stage schedule, checkpoints,
//! metrics and the training loop.

mod checkpoint;
mod metrics;
mod optim;
mod schedule;
mod trainer;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, MOMENTUM_SUFFIX,
};
pub use metrics::{read_metrics, BranchLosses, MetricsLog, MetricsRow, METRICS_HEADER};
pub use optim::{
    accumulate_step, grad_norm, scale_grads, sgd_momentum_update, step_lr, Sgd, StepStats,
};
pub use schedule::{
    glob_match, BranchWeights, LossWeights, Stage, StageSchedule, DETECTION_GROUPS,
    RECOGNITION_GROUPS,
};
pub use trainer::{StepInfo, StepReport, TrainConfig, Trainer, STN_PARAMS};
