//! `facestn eval`: detection sweep and verification accuracy of a checkpoint.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use facestn::config::RunConfig;
use facestn::data::{load_annotations, load_image, Sample, SyntheticWorld};
use facestn::detection::{read_detections, write_detections, BBox};
use facestn::eval::{
    detection_sweep, evaluate_detection, verification_with, DetectionReport, FaceEmbedder,
    VerificationReport, MATCH_IOU,
};
use facestn::model::FaceNet;
use facestn::recognition::write_embeddings;
use facestn::training::load_checkpoint;

use crate::run::{build_model, data_source, CONFIG_ECHO};
use crate::{load_config, CliError, CliResult, Common};

pub const DETECTIONS_FILE: &str = "detections.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub detection: DetectionReport,
    pub verification: VerificationReport,
}

/// Rebuild the configured model and load a checkpoint into it.
pub fn load_model(cfg: &RunConfig, checkpoint: &Path) -> CliResult<FaceNet> {
    if !checkpoint.exists() {
        return Err(CliError::Usage(format!("checkpoint {} not found", checkpoint.display())));
    }
    let source = data_source(cfg)?;
    let mut net = build_model(cfg, source.as_ref())?;
    net.import_params(&load_checkpoint(checkpoint)?.params)?;
    Ok(net)
}

/// Evaluate on the held-out tiles and verification pairs of `world`,
/// writing the test-face embeddings to `embeddings` when given.
pub fn evaluate(
    net: &FaceNet,
    cfg: &RunConfig,
    world: &SyntheticWorld,
    detection_samples: &[Sample],
    embeddings: Option<&Path>,
) -> CliResult<EvalReport> {
    let detection = evaluate_detection(net, detection_samples)?;
    let mut emb = FaceEmbedder::new(net, world, cfg.eval_crop);
    let verification = verification_with(&mut emb)?;
    if let Some(p) = embeddings {
        let all: Vec<_> = emb.embeddings().into_iter().map(|(_, e)| e).collect();
        write_embeddings(BufWriter::new(File::create(p).map_err(facestn::Error::from)?), &all)?;
    }
    Ok(EvalReport {
        detection,
        verification,
    })
}

fn annotated_samples(path: &Path) -> CliResult<Vec<Sample>> {
    if !path.exists() {
        return Err(CliError::Usage(format!("annotation file {} not found", path.display())));
    }
    let set = load_annotations(path)?;
    let root = path.parent().unwrap_or(Path::new(""));
    set.images
        .iter()
        .map(|a| {
            Ok(Sample {
                image: load_image(&root.join(&a.path))?,
                boxes: a.boxes.clone(),
                identities: a.identities.clone(),
            })
        })
        .collect()
}

pub fn cmd_eval(
    common: &Common,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
    annotations: Option<&Path>,
    detections: Option<&Path>,
) -> CliResult<()> {
    let dir = match (checkpoint, out) {
        (Some(c), _) => {
            if !c.exists() {
                return Err(CliError::Usage(format!("checkpoint {} not found", c.display())));
            }
            c.parent().unwrap_or(Path::new(".")).to_path_buf()
        }
        (None, Some(o)) if detections.is_some() => o.to_path_buf(),
        _ => {
            return Err(CliError::Usage(
                "eval needs --checkpoint, or --detections with --out".into(),
            ))
        }
    };
    let echoed = dir.join(CONFIG_ECHO);
    let cfg = match (&common.config, checkpoint.is_some() && echoed.exists()) {
        (None, true) => {
            let mut cfg = RunConfig::load(&echoed)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cfg
        }
        _ => load_config(common)?,
    };
    let out = out.unwrap_or(&dir);
    fs::create_dir_all(out).map_err(facestn::Error::from)?;
    let world = cfg.world()?;
    let samples = match annotations {
        Some(p) => annotated_samples(p)?,
        None => world.eval_tiles()?,
    };
    let write = |name: &str, body: String| fs::write(out.join(name), body).map_err(facestn::Error::from);

    let Some(checkpoint) = checkpoint else {
        let path = detections.expect("checked above");
        let file = File::open(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let listed = read_detections(BufReader::new(file))?;
        let mut images: Vec<(Vec<BBox>, Vec<BBox>)> =
            samples.iter().map(|s| (Vec::new(), s.boxes.clone())).collect();
        for (id, b) in listed {
            let n = images.len();
            images
                .get_mut(id)
                .ok_or_else(|| CliError::Usage(format!("image id {id} out of range (have {n} images)")))?
                .0
                .push(b);
        }
        let detection = detection_sweep(&images, MATCH_IOU);
        let text = format_detection(&detection);
        print!("{text}");
        write("eval.txt", text)?;
        write("detection_sweep.csv", sweep_csv(&detection))?;
        return Ok(());
    };

    let net = load_model(&cfg, checkpoint)?;
    let mut listed = Vec::new();
    let mut images = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let dets = net.detect(&s.image)?.boxes;
        listed.extend(dets.iter().map(|b| (i, *b)));
        images.push((dets, s.boxes.clone()));
    }
    let detection = detection_sweep(&images, MATCH_IOU);
    let mut emb = FaceEmbedder::new(&net, &world, cfg.eval_crop);
    let verification = verification_with(&mut emb)?;
    let all: Vec<_> = emb.embeddings().into_iter().map(|(_, e)| e).collect();
    let emb_file = File::create(out.join(EMBEDDINGS_FILE)).map_err(facestn::Error::from)?;
    write_embeddings(BufWriter::new(emb_file), &all)?;
    let det_file = File::create(out.join(DETECTIONS_FILE)).map_err(facestn::Error::from)?;
    write_detections(BufWriter::new(det_file), &listed)?;

    let report = EvalReport {
        detection,
        verification,
    };
    let text = format_report(&report);
    print!("{text}");
    write("eval.txt", text)?;
    write("detection_sweep.csv", sweep_csv(&report.detection))?;
    write("verification.csv", verification_csv(&report.verification))?;
    Ok(())
}

fn format_detection(d: &DetectionReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "detection: {} images, {} faces", d.images, d.total_gt);
    let _ = writeln!(
        s,
        "  best F1 {:.4} at score >= {:.4}: recall {:.4}, precision {:.4}",
        d.best.f1, d.best.threshold, d.best.recall, d.best.precision
    );
    let _ = writeln!(s, "  recall with all detections {:.4}", d.max_recall());
    s
}

pub fn format_report(r: &EvalReport) -> String {
    let d = &r.detection;
    let v = &r.verification;
    let mut s = format_detection(d);
    let _ = writeln!(s, "verification: {} test pairs", v.test_pairs);
    let _ = writeln!(
        s,
        "  threshold {:.4} (validation accuracy {:.4}), test accuracy {:.4}",
        v.threshold, v.val_accuracy, v.test_accuracy
    );
    let _ = writeln!(
        s,
        "  {:.2} ms per face ({:.2} ms features), {} faces without a detection",
        v.seconds_per_face * 1e3,
        v.feature_seconds_per_face * 1e3,
        v.fallbacks
    );
    s
}

pub fn sweep_csv(d: &DetectionReport) -> String {
    let mut s = String::from("threshold,recall,precision,f1,detections\n");
    for p in &d.sweep {
        let _ = writeln!(s, "{},{},{},{},{}", p.threshold, p.recall, p.precision, p.f1, p.detections);
    }
    s
}

pub fn verification_csv(v: &VerificationReport) -> String {
    format!(
        "threshold,val_accuracy,test_accuracy,test_pairs,seconds_per_face,feature_seconds_per_face\n{},{},{},{},{},{}\n",
        v.threshold,
        v.val_accuracy,
        v.test_accuracy,
        v.test_pairs,
        v.seconds_per_face,
        v.feature_seconds_per_face
    )
}
