//! Command-line front end: training runs, evaluation, gradient checks,
//! transform inspection and the share-depth ablation.

pub mod ablation;
pub mod evaluate;
pub mod run;
pub mod transform;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use facestn::config::RunConfig;
use facestn::gradcheck::{self, DEFAULT_INSTANCES};

pub use run::{latest_checkpoint, train, RunOutcome, TrainOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad config, missing inputs.
    #[error("{0}")]
    Usage(String),
    /// A check ran and failed.
    #[error("{0}")]
    Check(String),
    /// A checkpoint does not fit the configured model.
    #[error("state mismatch: {0}")]
    State(String),
    #[error(transparent)]
    Core(facestn::Error),
}

impl From<facestn::Error> for CliError {
    fn from(e: facestn::Error) -> Self {
        use facestn::Error as E;
        match e {
            E::Config { .. } | E::Parse { .. } => CliError::Usage(e.to_string()),
            E::StateMismatch(m) => CliError::State(m),
            e => CliError::Core(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) | CliError::Core(_) => 1,
            CliError::Usage(_) => 2,
            CliError::State(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "facestn", version, about = "Face detection and recognition with spatial transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train through the staged schedule, writing checkpoints and metrics.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the latest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop (with a checkpoint) once this many iterations are done.
        #[arg(long)]
        stop_at: Option<u64>,
    },
    /// Detection recall and verification accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Where to write reports; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score detections on an annotation file instead of synthetic tiles.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Score a saved detection list (`image_id x1 y1 x2 y2 score`)
        /// instead of running a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        detections: Option<PathBuf>,
    },
    /// Finite-difference checks of the backward passes.
    Gradcheck {
        /// Suite name, or `all`.
        #[arg(default_value = "all")]
        scope: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_INSTANCES)]
        instances: usize,
        /// List the suites and exit.
        #[arg(long)]
        list: bool,
    },
    /// Warp an image with an affine theta.
    Transform {
        image: PathBuf,
        /// Output PNG.
        #[arg(long)]
        out: PathBuf,
        /// Six comma-separated theta values, row-major.
        #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["alpha", "tx", "ty"])]
        theta: Option<String>,
        /// Rotation in radians.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        tx: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        ty: Option<f64>,
    },
    /// Train and evaluate once per share depth and tabulate the results.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        depths: Vec<usize>,
    },
}

pub fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) if !p.exists() => {
            return Err(CliError::Usage(format!("config {} not found", p.display())))
        }
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train {
            common,
            out,
            resume,
            stop_at,
        } => {
            let cfg = load_config(&common)?;
            let opts = TrainOptions {
                resume,
                stop_at,
                verbose: true,
            };
            run::train(&cfg, &out, &opts).map(|_| ())
        }
        Command::Eval {
            common,
            checkpoint,
            out,
            annotations,
            detections,
        } => evaluate::cmd_eval(
            &common,
            checkpoint.as_deref(),
            out.as_deref(),
            annotations.as_deref(),
            detections.as_deref(),
        ),
        Command::Gradcheck {
            scope,
            seed,
            instances,
            list,
        } => {
            if list {
                for s in gradcheck::suites() {
                    println!("{}", s.name);
                }
                return Ok(());
            }
            cmd_gradcheck(&scope, instances, seed)
        }
        Command::Transform {
            image,
            out,
            theta,
            alpha,
            tx,
            ty,
        } => transform::cmd_transform(&image, &out, theta.as_deref(), alpha, tx, ty),
        Command::Ablate { common, out, depths } => {
            let cfg = load_config(&common)?;
            let rows = ablation::share_depth_ablation(&cfg, &depths, &out, true)?;
            print!("{}", ablation::format_table(&rows));
            Ok(())
        }
    }
}

pub fn cmd_gradcheck(scope: &str, instances: usize, seed: u64) -> CliResult<()> {
    if scope != "all" && gradcheck::find_suite(scope).is_none() {
        return Err(CliError::Usage(format!(
            "unknown gradient check `{scope}`; try --list"
        )));
    }
    if instances == 0 {
        return Err(CliError::Usage("--instances must be at least 1".into()));
    }
    let reports = gradcheck::run_scope(scope, instances, seed)?;
    print!("{}", format_gradcheck(&reports));
    check_reports(&reports)
}

/// `Check` error naming every failed suite.
pub fn check_reports(reports: &[gradcheck::SuiteReport]) -> CliResult<()> {
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("gradient check failed: {}", failed.join(", "))))
    }
}

pub fn format_gradcheck(reports: &[gradcheck::SuiteReport]) -> String {
    let mut s = format!(
        "{:<22} {:>9} {:>12} {:>9} {:>8}  result\n",
        "op", "instances", "max_rel_err", "checked", "kinks"
    );
    for r in reports {
        s += &format!(
            "{:<22} {:>9} {:>12.3e} {:>9} {:>8}  {}\n",
            r.name,
            r.instances,
            r.max_rel_err,
            r.checked,
            r.skipped,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    s
}
