#![allow(dead_code)]

use facestn::data::{DataConfig, SyntheticWorld};
use facestn::detection::AnchorConfig;
use facestn::model::ModelConfig;
use facestn::training::TrainConfig;

pub fn world() -> SyntheticWorld {
    SyntheticWorld::new(DataConfig::default()).unwrap()
}

/// A narrow network that trains in milliseconds per step.
pub fn tiny_model(num_classes: usize) -> ModelConfig {
    ModelConfig {
        backbone: [4, 6, 8, 8, 8],
        rpn_hidden: 8,
        anchors: AnchorConfig {
            scales: vec![16.0, 24.0, 32.0],
            ratios: vec![1.0, 1.5],
            stride: 8,
        },
        pool: 6,
        det_width: 16,
        recog_pool: 6,
        recog_widths: vec![4, 6, 8],
        embed_dim: 16,
        num_classes,
        ..ModelConfig::default()
    }
}

pub fn tiny_train(max_iter: u64) -> TrainConfig {
    TrainConfig {
        base_lr: 0.01,
        stepsize: 4,
        iter_size: 2,
        max_iter,
        checkpoint_interval: max_iter.max(1),
        ..TrainConfig::default()
    }
}
