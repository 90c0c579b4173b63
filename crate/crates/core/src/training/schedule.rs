//! Multi-stage training plan: which parameter groups train, which data feeds
//! each step, and per-dataset branch loss weights.

use crate::data::DatasetKind;
use crate::error::{Error, Result};

/// Loss weights of the three branches for one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchWeights {
    pub rpn: f64,
    pub det: f64,
    pub recog: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub detection: BranchWeights,
    pub recognition: BranchWeights,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            detection: BranchWeights {
                rpn: 1.0,
                det: 1.0,
                recog: 0.0,
            },
            recognition: BranchWeights {
                rpn: 0.0,
                det: 0.5,
                recog: 1.0,
            },
        }
    }
}

impl LossWeights {
    pub fn for_dataset(&self, kind: DatasetKind) -> BranchWeights {
        match kind {
            DatasetKind::Detection => self.detection,
            DatasetKind::Recognition => self.recognition,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub start: u64,
    pub end: u64,
    /// Name patterns (`*` matches any run of characters).
    pub trainable: Vec<String>,
    /// Datasets used in turn, one per accumulated step.
    pub datasets: Vec<DatasetKind>,
}

impl Stage {
    pub fn trains(&self, name: &str) -> bool {
        self.trainable.iter().any(|p| glob_match(p, name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
    pub weights: LossWeights,
}

/// Parameter groups of the detection network.
pub const DETECTION_GROUPS: [&str; 3] = ["mnet.*", "rpn.*", "det.*"];
pub const RECOGNITION_GROUPS: [&str; 1] = ["recog.*"];

impl StageSchedule {
    /// Detection only on `[0, f1)`, everything jointly with alternating data
    /// on `[f1, f2)`, recognition only with detection frozen on `[f2, 1)`,
    /// all as fractions of `max_iter`.
    pub fn three_stage(max_iter: u64, f1: f64, f2: f64, weights: LossWeights) -> Result<Self> {
        if !(0.0..=1.0).contains(&f1) || !(f1..=1.0).contains(&f2) {
            return Err(Error::config(
                "schedule",
                format!("stage fractions must satisfy 0 <= {f1} <= {f2} <= 1"),
            ));
        }
        let b1 = (max_iter as f64 * f1).round() as u64;
        let b2 = (max_iter as f64 * f2).round() as u64;
        let owned = |g: &[&str]| g.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let stages = vec![
            Stage {
                start: 0,
                end: b1,
                trainable: owned(&DETECTION_GROUPS),
                datasets: vec![DatasetKind::Detection],
            },
            Stage {
                start: b1,
                end: b2,
                trainable: vec!["*".into()],
                datasets: vec![DatasetKind::Detection, DatasetKind::Recognition],
            },
            Stage {
                start: b2,
                end: max_iter,
                trainable: owned(&RECOGNITION_GROUPS),
                datasets: vec![DatasetKind::Recognition],
            },
        ]
        .into_iter()
        .filter(|s| s.start < s.end)
        .collect();
        let schedule = StageSchedule { stages, weights };
        schedule.validate(max_iter)?;
        Ok(schedule)
    }

    /// Stages must tile `[0, max_iter)` without gaps or overlaps, each with
    /// at least one dataset, and weights must be non-negative.
    pub fn validate(&self, max_iter: u64) -> Result<()> {
        let mut at = 0;
        for (i, s) in self.stages.iter().enumerate() {
            if s.start != at || s.end <= s.start {
                return Err(Error::config(
                    "schedule",
                    format!("stage {i} spans [{}, {}) but must start at {at} and be non-empty", s.start, s.end),
                ));
            }
            if s.datasets.is_empty() {
                return Err(Error::config("schedule", format!("stage {i} has no datasets")));
            }
            at = s.end;
        }
        if at != max_iter {
            return Err(Error::config(
                "schedule",
                format!("stages cover [0, {at}) but max_iter is {max_iter}"),
            ));
        }
        for (name, w) in [
            ("detection", self.weights.detection),
            ("recognition", self.weights.recognition),
        ] {
            if [w.rpn, w.det, w.recog].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::config(
                    format!("weights.{name}"),
                    "loss weights must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }

    /// Index of the stage containing `iter`.
    pub fn stage_index(&self, iter: u64) -> Option<usize> {
        self.stages.iter().position(|s| s.start <= iter && iter < s.end)
    }

    pub fn stage_at(&self, iter: u64) -> Option<&Stage> {
        self.stage_index(iter).map(|i| &self.stages[i])
    }

    /// Dataset feeding accumulated step `iter`: strict alternation in stage order.
    pub fn dataset_at(&self, iter: u64) -> Option<DatasetKind> {
        let s = self.stage_at(iter)?;
        Some(s.datasets[((iter - s.start) % s.datasets.len() as u64) as usize])
    }
}

/// `*` matches any (possibly empty) run of characters; everything else is literal.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || name.len() < first.len() + last.len() || !name.ends_with(last) {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    true
}
