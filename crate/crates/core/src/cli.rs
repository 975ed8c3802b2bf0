//! Command-line front end. `run_cli` returns the process exit code:
//! 0 on success, 1 for input or validation errors, 2 when a requested
//! metric is undefined on the data.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::decision::{decide_all, fit_mahalanobis, MahalanobisModel};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{self, AospCurvePoint};
use crate::model::{DatasetBundle, EvalConfig, OodAlgorithm};
use crate::partition::partition_all;
use crate::scalar::extended::parse_extended;
use crate::synth::{self, SynthConfig};

#[derive(Parser, Debug)]
#[command(name = "osodd", version, about = "Open-set object detection evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full report: AOSP, ID-mAP, CA-AR, AUROC axes, curve and histograms.
    Evaluate(EvalArgs),
    /// AOSP value and curve only.
    Aosp(EvalArgs),
    /// Annotate detections with decided_class, confidence and id_score.
    Decide(DecideArgs),
    /// Dump the ID / OOD / background partition label of every detection.
    Partition(PartitionArgs),
    /// Generate a synthetic ground-truth / detection / split bundle.
    Synth(SynthArgs),
}

fn parse_threshold(s: &str) -> std::result::Result<f64, String> {
    parse_extended(s).filter(|v| !v.is_nan()).ok_or_else(|| format!("not a threshold: {s:?}"))
}

#[derive(Args, Debug)]
struct ScoringArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(long = "ood-algo", default_value = "energy", value_parser = ["energy", "msp", "max_logit", "mahalanobis"])]
    ood_algo: String,
    /// ID threshold; accepts `inf` and `-inf`.
    #[arg(long = "id-thresh", default_value = "0", allow_hyphen_values = true, value_parser = parse_threshold)]
    id_thresh: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Detections kept per image.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Reference features for the Mahalanobis scorer (JSON Lines of
    /// `{"class": id, "features": [...]}`).
    #[arg(long = "ref-features")]
    ref_features: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl ScoringArgs {
    fn config(&self) -> Result<EvalConfig<f64>> {
        let cfg = EvalConfig {
            temperature: self.temperature,
            id_thresh: self.id_thresh,
            k_per_image: self.k,
            ood_algorithm: self.ood_algo.parse()?,
            ..EvalConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn model(&self, cfg: &EvalConfig<f64>) -> Result<Option<MahalanobisModel<f64>>> {
        if cfg.ood_algorithm != OodAlgorithm::Mahalanobis {
            return Ok(None);
        }
        let path = self
            .ref_features
            .as_ref()
            .ok_or_else(|| Error::invalid("--ood-algo mahalanobis requires --ref-features"))?;
        Ok(Some(fit_mahalanobis(&io::load_reference_features(path)?)?))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    dets: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecideArgs {
    #[arg(long)]
    dets: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "out-gt")]
    out_gt: PathBuf,
    #[arg(long = "out-dets")]
    out_dets: PathBuf,
    #[arg(long = "out-split")]
    out_split: PathBuf,
}

#[derive(Serialize)]
struct AospReport<'a> {
    aosp: f64,
    curve: &'a [AospCurvePoint<f64>],
    config: &'a EvalConfig<f64>,
}

fn load_bundle(gt: &Path, dets: &Path, split: &Path, cfg: EvalConfig<f64>) -> Result<DatasetBundle<f64>> {
    let (images, gts) = io::load_ground_truth(gt)?;
    let dets = io::load_detections(dets)?;
    let split = io::load_split(split)?;
    let bundle = DatasetBundle { images, gts, dets, split, cfg };
    bundle.validate()?;
    Ok(bundle)
}

fn emit(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Error::File { path: path.to_owned(), msg: e.to_string() }),
        None => Ok(stdout.write_all(bytes)?),
    }
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Evaluate(a) => {
            let cfg = a.scoring.config()?;
            let model = a.scoring.model(&cfg)?;
            let bundle = load_bundle(&a.gt, &a.dets, &a.scoring.split, cfg)?;
            let report = a.scoring.pool()?.install(|| metrics::evaluate(&bundle, model.as_ref()))?;
            emit(a.out.as_deref(), io::report_json(&report)?.as_bytes(), stdout)
        }
        Command::Aosp(a) => {
            let cfg = a.scoring.config()?;
            let model = a.scoring.model(&cfg)?;
            let bundle = load_bundle(&a.gt, &a.dets, &a.scoring.split, cfg)?;
            let result = a.scoring.pool()?.install(|| -> Result<_> {
                let dets = decide_all(&bundle.dets, &bundle.split, &bundle.cfg, model.as_ref())?;
                metrics::aosp(&dets, &bundle.gts, &bundle.split, &bundle.cfg)
            })?;
            let report = AospReport { aosp: result.aosp, curve: &result.curve, config: &bundle.cfg };
            emit(a.out.as_deref(), io::report_json(&report)?.as_bytes(), stdout)
        }
        Command::Decide(a) => {
            let cfg = a.scoring.config()?;
            let model = a.scoring.model(&cfg)?;
            let split = io::load_split(&a.scoring.split)?;
            let lines = io::load_detection_lines::<f64>(&a.dets)?;
            let dets: Vec<_> = lines.iter().map(|l| l.det.clone()).collect();
            let decided = a.scoring.pool()?.install(|| decide_all(&dets, &split, &cfg, model.as_ref()))?;
            let mut buf = Vec::new();
            io::write_decided_lines(&mut buf, &lines, &decided)?;
            emit(a.out.as_deref(), &buf, stdout)
        }
        Command::Partition(a) => {
            let bundle = load_bundle(&a.gt, &a.dets, &a.split, EvalConfig::default())?;
            let labels = partition_all(&bundle.dets, &bundle.gts, &bundle.split, &bundle.cfg);
            let mut buf = Vec::new();
            io::write_partition(&mut buf, &bundle.dets, &bundle.gts, &labels)?;
            emit(a.out.as_deref(), &buf, stdout)
        }
        Command::Synth(a) => {
            let text = std::fs::read_to_string(&a.config)
                .map_err(|e| Error::File { path: a.config.clone(), msg: e.to_string() })?;
            let cfg: SynthConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Parse { path: a.config.clone(), line: e.line(), msg: e.to_string() })?;
            let bundle = synth::generate::<f64>(&cfg)?;
            io::write_ground_truth(&a.out_gt, &bundle.images, &bundle.gts, &synth::all_classes(&cfg))?;
            io::save_detections(&a.out_dets, &bundle.dets)?;
            io::write_split(&a.out_split, &bundle.split)
        }
    }
}

/// Runs the CLI with explicit output streams.
pub fn run_cli_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::UndefinedMetric(_) => 2,
                _ => 1,
            }
        }
    }
}

/// Runs the CLI against the process's standard streams.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    code
}
