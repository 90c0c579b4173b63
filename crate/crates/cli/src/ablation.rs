//! Share-depth ablation: one full training run and evaluation per depth.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use facestn::config::RunConfig;

use crate::evaluate::{evaluate, format_report, load_model};
use crate::run::{train, TrainOptions};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub share_depth: usize,
    pub verification_accuracy: f64,
    pub detection_recall: f64,
    pub feature_ms_per_face: f64,
    pub ms_per_face: f64,
}

pub fn share_depth_ablation(
    cfg: &RunConfig,
    depths: &[usize],
    out: &Path,
    verbose: bool,
) -> CliResult<Vec<AblationRow>> {
    if depths.is_empty() {
        return Err(CliError::Usage("--depths needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(depths.len());
    for &d in depths {
        let mut cfg = cfg.clone();
        cfg.model.share_depth = d;
        cfg.validate()?;
        let dir = out.join(format!("share_{d}"));
        if verbose {
            println!("share depth {d}: training into {}", dir.display());
        }
        let outcome = train(&cfg, &dir, &TrainOptions { verbose, ..Default::default() })?;
        let net = load_model(&cfg, &outcome.checkpoint)?;
        let world = cfg.world()?;
        let report = evaluate(&net, &cfg, &world, &world.eval_tiles()?, None)?;
        fs::write(dir.join("eval.txt"), format_report(&report)).map_err(facestn::Error::from)?;
        let v = &report.verification;
        rows.push(AblationRow {
            share_depth: d,
            verification_accuracy: v.test_accuracy,
            detection_recall: report.detection.best.recall,
            feature_ms_per_face: v.feature_seconds_per_face * 1e3,
            ms_per_face: v.seconds_per_face * 1e3,
        });
    }
    fs::write(out.join("ablation.txt"), format_table(&rows)).map_err(facestn::Error::from)?;
    Ok(rows)
}

pub fn format_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:>11} {:>12} {:>16} {:>16} {:>11}\n",
        "share_depth", "accuracy", "detection_recall", "feature_ms/face", "ms/face"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>11} {:>12.4} {:>16.4} {:>16.3} {:>11.3}",
            r.share_depth, r.verification_accuracy, r.detection_recall, r.feature_ms_per_face, r.ms_per_face
        );
    }
    s
}
