//! Training runs persisted to an output directory.

use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use facestn::config::RunConfig;
use facestn::data::{AnnotatedSource, DataSource};
use facestn::model::FaceNet;
use facestn::training::{load_checkpoint, save_checkpoint, MetricsLog, Trainer};

use crate::{CliError, CliResult};

pub const CONFIG_ECHO: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub resume: bool,
    pub stop_at: Option<u64>,
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub iter: u64,
    pub checkpoint: PathBuf,
    pub param_hash: String,
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutLock(PathBuf);

impl OutLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutLock(path)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Usage(format!(
                "{} is in use by another run (delete {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(facestn::Error::from(e).into()),
        }
    }
}

impl Drop for OutLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn checkpoint_path(dir: &Path, iter: u64) -> PathBuf {
    dir.join(format!("ckpt_{iter:08}.bin"))
}

/// The checkpoint with the highest iteration in `dir`.
pub fn latest_checkpoint(dir: &Path) -> CliResult<Option<PathBuf>> {
    let mut best: Option<(u64, PathBuf)> = None;
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(facestn::Error::from(e).into()),
    };
    for entry in entries {
        let path = entry.map_err(facestn::Error::from)?.path();
        let iter = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("ckpt_")?.strip_suffix(".bin")?.parse::<u64>().ok());
        if let Some(i) = iter {
            if best.as_ref().is_none_or(|(b, _)| i > *b) {
                best = Some((i, path));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Synthetic data unless annotation files are configured.
pub fn data_source(cfg: &RunConfig) -> CliResult<Box<dyn DataSource>> {
    if cfg.detection_annotations.is_some() || cfg.recognition_annotations.is_some() {
        for p in [&cfg.detection_annotations, &cfg.recognition_annotations].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Usage(format!("annotation file {} not found", p.display())));
            }
        }
        Ok(Box::new(AnnotatedSource::open(
            cfg.detection_annotations.as_deref(),
            cfg.recognition_annotations.as_deref(),
        )?))
    } else {
        Ok(Box::new(cfg.world()?))
    }
}

pub fn build_model(cfg: &RunConfig, source: &dyn DataSource) -> CliResult<FaceNet> {
    Ok(FaceNet::new(cfg.model_for(source.num_classes()), cfg.seed)?)
}

/// Run (or continue) the schedule, checkpointing every
/// `train.checkpoint_interval` iterations and at the end.
pub fn train(cfg: &RunConfig, out: &Path, opts: &TrainOptions) -> CliResult<RunOutcome> {
    fs::create_dir_all(out).map_err(facestn::Error::from)?;
    let _lock = OutLock::acquire(out)?;
    if !opts.resume {
        if let Some(existing) = latest_checkpoint(out)? {
            return Err(CliError::Usage(format!(
                "{} already holds {}; pass --resume or use a new directory",
                out.display(),
                existing.display()
            )));
        }
    }
    fs::write(out.join(CONFIG_ECHO), cfg.echo()).map_err(facestn::Error::from)?;
    let source = data_source(cfg)?;
    let net = build_model(cfg, source.as_ref())?;
    let mut trainer = Trainer::new(net, source.as_ref(), cfg.train.clone(), cfg.seed)?;
    let metrics = out.join(METRICS_FILE);

    let resume_from = if opts.resume { latest_checkpoint(out)? } else { None };
    let mut log = match resume_from {
        Some(path) => {
            let ckpt = load_checkpoint(&path)?;
            trainer.restore(&ckpt)?;
            if opts.verbose {
                println!("resuming from {} at iteration {}", path.display(), ckpt.iter);
            }
            MetricsLog::resume(&metrics, trainer.iter())?
        }
        None => {
            save_checkpoint(&checkpoint_path(out, 0), &trainer.checkpoint())?;
            MetricsLog::create(&metrics)?
        }
    };

    let max = cfg.train.max_iter;
    let stop = opts.stop_at.map_or(max, |s| s.min(max));
    let interval = cfg.train.checkpoint_interval;
    while trainer.iter() < stop {
        let r = trainer.step()?;
        log.append(&r.row)?;
        let it = trainer.iter();
        if it % interval == 0 || it == stop {
            log.flush()?;
            save_checkpoint(&checkpoint_path(out, it), &trainer.checkpoint())?;
            if opts.verbose {
                let l = &r.row.losses;
                println!(
                    "iter {it:>6}  stage {}  lr {:.2e}  rpn {:.4}  det {:.4}  softmax {:.4}  center {:.4}",
                    r.row.stage, r.row.lr, l.rpn, l.det, l.softmax, l.center
                );
            }
        }
    }
    log.flush()?;
    Ok(RunOutcome {
        iter: trainer.iter(),
        checkpoint: checkpoint_path(out, trainer.iter()),
        param_hash: trainer.net.param_hash(),
    })
}
