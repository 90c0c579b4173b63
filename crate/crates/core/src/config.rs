//! Run configuration: flat `key = value` lines with dotted sections.
//!
//! Blank lines and `#` comments are ignored, unknown keys are rejected and
//! missing keys keep their defaults. [`RunConfig::echo`] writes every
//! resolved key back out in the same syntax.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{DataConfig, SyntheticWorld};
use crate::error::{Error, Result};
use crate::eval::FaceCrop;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Root of every random stream (data, init, sampling).
    pub seed: u64,
    pub data: DataConfig,
    /// Train from annotation files instead of synthetic images.
    pub detection_annotations: Option<PathBuf>,
    pub recognition_annotations: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval_crop: FaceCrop,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataConfig::default(),
            detection_annotations: None,
            recognition_annotations: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval_crop: FaceCrop::Detected,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn path(v: &Option<PathBuf>) -> String {
    v.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn crop_name(c: FaceCrop) -> &'static str {
    match c {
        FaceCrop::Detected => "detected",
        FaceCrop::GroundTruth => "ground_truth",
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: Some(path.to_path_buf()),
                line,
                msg,
            },
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: None,
                    line: i + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let d = &mut self.data;
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "share_depth" => m.share_depth = parse(key, v)?,
            "data.tile" => d.tile = parse(key, v)?,
            "data.grid_rows" => d.grid_rows = parse(key, v)?,
            "data.grid_cols" => d.grid_cols = parse(key, v)?,
            "data.train_identities" => d.split.train_identities = parse(key, v)?,
            "data.per_identity" => d.split.per_identity = parse(key, v)?,
            "data.held_out_identities" => d.split.held_out_identities = parse(key, v)?,
            "data.held_out_per_identity" => d.split.held_out_per_identity = parse(key, v)?,
            "data.val_pairs" => d.split.val_pairs = parse(key, v)?,
            "data.test_pairs" => d.split.test_pairs = parse(key, v)?,
            "data.eval_tiles" => d.eval_tiles = parse(key, v)?,
            "data.max_rotation_deg" => d.nuisance.max_rotation_deg = parse(key, v)?,
            "data.scale_min" => d.nuisance.scale.0 = parse(key, v)?,
            "data.scale_max" => d.nuisance.scale.1 = parse(key, v)?,
            "data.max_shift" => d.nuisance.max_shift = parse(key, v)?,
            "data.max_brightness" => d.nuisance.max_brightness = parse(key, v)?,
            "data.detection_annotations" => {
                self.detection_annotations = (!v.is_empty()).then(|| PathBuf::from(v))
            }
            "data.recognition_annotations" => {
                self.recognition_annotations = (!v.is_empty()).then(|| PathBuf::from(v))
            }
            "anchors.scales" => m.anchors.scales = parse_list(key, v)?,
            "anchors.ratios" => m.anchors.ratios = parse_list(key, v)?,
            "anchors.stride" => m.anchors.stride = parse(key, v)?,
            "model.backbone" => {
                let w: Vec<usize> = parse_list(key, v)?;
                m.backbone = w
                    .try_into()
                    .map_err(|_| Error::config(key, "needs exactly 5 widths"))?;
            }
            "model.rpn_hidden" => m.rpn_hidden = parse(key, v)?,
            "model.pool" => m.pool = parse(key, v)?,
            "model.det_width" => m.det_width = parse(key, v)?,
            "model.det_stn" => m.det_stn = parse(key, v)?,
            "model.det_nms" => m.det_nms = parse(key, v)?,
            "model.regression_loss" => m.regression = parse(key, v)?,
            "rpn.pos_iou" => m.rpn_targets.pos_iou = parse(key, v)?,
            "rpn.neg_iou" => m.rpn_targets.neg_iou = parse(key, v)?,
            "rpn.batch_size" => m.rpn_targets.batch_size = parse(key, v)?,
            "rpn.fg_fraction" => m.rpn_targets.fg_fraction = parse(key, v)?,
            "rpn.pre_nms_top" => m.train_proposals.pre_nms_top = parse(key, v)?,
            "rpn.post_nms_top" => m.train_proposals.post_nms_top = parse(key, v)?,
            "rpn.nms_iou" => m.train_proposals.nms_iou = parse(key, v)?,
            "rpn.min_size" => m.train_proposals.min_size = parse(key, v)?,
            "rpn.test_pre_nms_top" => m.test_proposals.pre_nms_top = parse(key, v)?,
            "rpn.test_post_nms_top" => m.test_proposals.post_nms_top = parse(key, v)?,
            "rpn.test_nms_iou" => m.test_proposals.nms_iou = parse(key, v)?,
            "rpn.test_min_size" => m.test_proposals.min_size = parse(key, v)?,
            "roi.per_image" => m.rois.rois_per_image = parse(key, v)?,
            "roi.fg_fraction" => m.rois.fg_fraction = parse(key, v)?,
            "roi.fg_iou" => m.rois.fg_iou = parse(key, v)?,
            "roi.bg_lo" => m.rois.bg_lo = parse(key, v)?,
            "roi.bg_hi" => m.rois.bg_hi = parse(key, v)?,
            "recog.stn" => m.recog_stn = parse(key, v)?,
            "recog.pool" => m.recog_pool = parse(key, v)?,
            "recog.widths" => m.recog_widths = parse_list(key, v)?,
            "recog.embed_dim" => m.embed_dim = parse(key, v)?,
            "recog.center_lambda" => m.center_lambda = parse(key, v)?,
            "recog.center_alpha" => m.center_alpha = parse(key, v)?,
            "recog.jitter" => m.recog_jitter = parse(key, v)?,
            "solver.base_lr" => t.base_lr = parse(key, v)?,
            "solver.gamma" => t.gamma = parse(key, v)?,
            "solver.stepsize" => t.stepsize = parse(key, v)?,
            "solver.momentum" => t.momentum = parse(key, v)?,
            "solver.iter_size" => t.iter_size = parse(key, v)?,
            "solver.max_iter" => t.max_iter = parse(key, v)?,
            "solver.clip_norm" => {
                let c: f64 = parse(key, v)?;
                t.clip_norm = (c != 0.0).then_some(c);
            }
            "solver.stn_lr_mult" => t.stn_lr_mult = parse(key, v)?,
            "schedule.detection_end" => t.stage_fractions.0 = parse(key, v)?,
            "schedule.joint_end" => t.stage_fractions.1 = parse(key, v)?,
            "weights.detection.rpn" => t.weights.detection.rpn = parse(key, v)?,
            "weights.detection.det" => t.weights.detection.det = parse(key, v)?,
            "weights.detection.recog" => t.weights.detection.recog = parse(key, v)?,
            "weights.recognition.rpn" => t.weights.recognition.rpn = parse(key, v)?,
            "weights.recognition.det" => t.weights.recognition.det = parse(key, v)?,
            "weights.recognition.recog" => t.weights.recognition.recog = parse(key, v)?,
            "train.checkpoint_interval" => t.checkpoint_interval = parse(key, v)?,
            "eval.crop" => {
                self.eval_crop = match v {
                    "detected" => FaceCrop::Detected,
                    "ground_truth" => FaceCrop::GroundTruth,
                    _ => return Err(Error::config(key, "expected detected or ground_truth")),
                }
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.data;
        let m = &self.model;
        let t = &self.train;
        let s = |v: &dyn Display| v.to_string();
        vec![
            ("seed", s(&self.seed)),
            ("share_depth", s(&m.share_depth)),
            ("data.tile", s(&d.tile)),
            ("data.grid_rows", s(&d.grid_rows)),
            ("data.grid_cols", s(&d.grid_cols)),
            ("data.train_identities", s(&d.split.train_identities)),
            ("data.per_identity", s(&d.split.per_identity)),
            ("data.held_out_identities", s(&d.split.held_out_identities)),
            ("data.held_out_per_identity", s(&d.split.held_out_per_identity)),
            ("data.val_pairs", s(&d.split.val_pairs)),
            ("data.test_pairs", s(&d.split.test_pairs)),
            ("data.eval_tiles", s(&d.eval_tiles)),
            ("data.max_rotation_deg", s(&d.nuisance.max_rotation_deg)),
            ("data.scale_min", s(&d.nuisance.scale.0)),
            ("data.scale_max", s(&d.nuisance.scale.1)),
            ("data.max_shift", s(&d.nuisance.max_shift)),
            ("data.max_brightness", s(&d.nuisance.max_brightness)),
            ("data.detection_annotations", path(&self.detection_annotations)),
            ("data.recognition_annotations", path(&self.recognition_annotations)),
            ("anchors.scales", list(&m.anchors.scales)),
            ("anchors.ratios", list(&m.anchors.ratios)),
            ("anchors.stride", s(&m.anchors.stride)),
            ("model.backbone", list(&m.backbone)),
            ("model.rpn_hidden", s(&m.rpn_hidden)),
            ("model.pool", s(&m.pool)),
            ("model.det_width", s(&m.det_width)),
            ("model.det_stn", s(&m.det_stn)),
            ("model.det_nms", s(&m.det_nms)),
            ("model.regression_loss", s(&m.regression)),
            ("rpn.pos_iou", s(&m.rpn_targets.pos_iou)),
            ("rpn.neg_iou", s(&m.rpn_targets.neg_iou)),
            ("rpn.batch_size", s(&m.rpn_targets.batch_size)),
            ("rpn.fg_fraction", s(&m.rpn_targets.fg_fraction)),
            ("rpn.pre_nms_top", s(&m.train_proposals.pre_nms_top)),
            ("rpn.post_nms_top", s(&m.train_proposals.post_nms_top)),
            ("rpn.nms_iou", s(&m.train_proposals.nms_iou)),
            ("rpn.min_size", s(&m.train_proposals.min_size)),
            ("rpn.test_pre_nms_top", s(&m.test_proposals.pre_nms_top)),
            ("rpn.test_post_nms_top", s(&m.test_proposals.post_nms_top)),
            ("rpn.test_nms_iou", s(&m.test_proposals.nms_iou)),
            ("rpn.test_min_size", s(&m.test_proposals.min_size)),
            ("roi.per_image", s(&m.rois.rois_per_image)),
            ("roi.fg_fraction", s(&m.rois.fg_fraction)),
            ("roi.fg_iou", s(&m.rois.fg_iou)),
            ("roi.bg_lo", s(&m.rois.bg_lo)),
            ("roi.bg_hi", s(&m.rois.bg_hi)),
            ("recog.stn", s(&m.recog_stn)),
            ("recog.pool", s(&m.recog_pool)),
            ("recog.widths", list(&m.recog_widths)),
            ("recog.embed_dim", s(&m.embed_dim)),
            ("recog.center_lambda", s(&m.center_lambda)),
            ("recog.center_alpha", s(&m.center_alpha)),
            ("recog.jitter", s(&m.recog_jitter)),
            ("solver.base_lr", s(&t.base_lr)),
            ("solver.gamma", s(&t.gamma)),
            ("solver.stepsize", s(&t.stepsize)),
            ("solver.momentum", s(&t.momentum)),
            ("solver.iter_size", s(&t.iter_size)),
            ("solver.max_iter", s(&t.max_iter)),
            ("solver.clip_norm", s(&t.clip_norm.unwrap_or(0.0))),
            ("solver.stn_lr_mult", s(&t.stn_lr_mult)),
            ("schedule.detection_end", s(&t.stage_fractions.0)),
            ("schedule.joint_end", s(&t.stage_fractions.1)),
            ("weights.detection.rpn", s(&t.weights.detection.rpn)),
            ("weights.detection.det", s(&t.weights.detection.det)),
            ("weights.detection.recog", s(&t.weights.detection.recog)),
            ("weights.recognition.rpn", s(&t.weights.recognition.rpn)),
            ("weights.recognition.det", s(&t.weights.recognition.det)),
            ("weights.recognition.recog", s(&t.weights.recognition.recog)),
            ("train.checkpoint_interval", s(&t.checkpoint_interval)),
            ("eval.crop", crop_name(self.eval_crop).to_string()),
        ]
    }

    /// `key=value` lines that parse back to this configuration.
    pub fn echo(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut model = self.model.clone();
        model.num_classes = model.num_classes.max(1);
        model.validate()?;
        self.train.validate()?;
        let n = &self.data.nuisance;
        if !(n.scale.0 > 0.0 && n.scale.0 <= n.scale.1) {
            return Err(Error::config("data.scale_min", "need 0 < scale_min <= scale_max"));
        }
        Ok(())
    }

    /// The synthetic world, seeded from the root seed.
    pub fn world(&self) -> Result<SyntheticWorld> {
        SyntheticWorld::new(DataConfig {
            seed: self.seed,
            ..self.data.clone()
        })
    }

    /// Model configuration with the class count of the training data.
    pub fn model_for(&self, num_classes: usize) -> ModelConfig {
        ModelConfig {
            num_classes,
            ..self.model.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::parse(
            "# toy\nshare_depth = 2\nanchors.scales = 16, 24\nsolver.clip_norm = 0\neval.crop = ground_truth\nrecog.jitter = 0.25\nsolver.stn_lr_mult = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.model.share_depth, 2);
        assert_eq!(cfg.model.recog_jitter, 0.25);
        assert_eq!(cfg.train.stn_lr_mult, 0.1);
        assert_eq!(cfg.model.anchors.scales, vec![16.0, 24.0]);
        assert_eq!(cfg.train.clip_norm, None);
        assert!(cfg.echo().contains("share_depth=2\n"));
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
        assert_eq!(RunConfig::parse(&RunConfig::default().echo()).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        match RunConfig::parse("solver.lr = 1") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "solver.lr"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values() {
        for text in ["share_depth = 5", "recog.jitter = 0.5", "solver.stn_lr_mult = -1", "model.backbone = 1,2,3", "solver.iter_size = 0", "seed = x"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config { .. })), "{text}");
        }
        assert!(matches!(RunConfig::parse("just words"), Err(Error::Parse { line: 1, .. })));
    }
}
