//! The `hfo` command line: simulate datasets, export scalograms, train,
//! evaluate and predict.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::convnet::{EpochStats, TrainHyper};
use crate::ecoc::CodingScheme;
use crate::error::Result;
use crate::eval::EvaluationReport;
use crate::io;
use crate::pipeline::{self, ModelKind, TrainConfig, DEFAULT_POOL_SIZE};
use crate::simgen::{gen_dataset, GenSpec, Profile, Sampling, DEFAULT_FS_HZ, DEFAULT_WINDOW_S};
use crate::svm::{KernelChoice, SvmConfig};
use crate::tfr::{scalogram, ScalogramConfig};

#[derive(Debug, Parser)]
#[command(
    name = "hfo",
    version,
    about = "Simulate, transform and classify high-frequency oscillations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled dataset of simulated events.
    Simulate(SimulateArgs),
    /// Write one 16-bit PGM scalogram per segment of a dataset.
    Scalogram(ScalogramArgs),
    /// Train a model on a stratified split and report on the held-out part.
    Train(TrainArgs),
    /// Evaluate a model, or retrain its configuration under k-fold or
    /// hold-out validation.
    Eval(EvalArgs),
    /// Classify every segment of a dataset.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "sim1")]
    profile: Profile,
    #[arg(long, default_value_t = 1000)]
    per_class: usize,
    /// Fixed SNR in dB, a range `lo..hi`, a choice `a|b`, or `clean`.
    #[arg(long, default_value = "clean")]
    snr_db: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_FS_HZ)]
    fs_hz: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    window_s: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScalogramOpts {
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    #[arg(long, default_value_t = 80.0)]
    fmin: f64,
    #[arg(long, default_value_t = 500.0)]
    fmax: f64,
    #[arg(long, default_value_t = 12)]
    voices: usize,
}

impl ScalogramOpts {
    fn config(&self) -> ScalogramConfig {
        ScalogramConfig {
            size: self.image_size,
            fmin_hz: self.fmin,
            fmax_hz: self.fmax,
            voices: self.voices,
        }
    }
}

#[derive(Debug, Args)]
struct ScalogramArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Only export the first N segments.
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    scalogram: ScalogramOpts,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    roc: Option<PathBuf>,
    /// Per-epoch loss and accuracy of the network as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value = "ova")]
    coding: CodingScheme,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// RBF width; defaults to 1 / (dim * variance) of the training features.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Side of the square pooled scalogram used as plain-SVM features.
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pool_size: usize,
    /// Training fraction of the stratified split.
    #[arg(long, default_value_t = pipeline::DEFAULT_TRAIN_FRACTION)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    scalogram: ScalogramOpts,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Retrain the model's configuration on k stratified folds.
    #[arg(long, conflicts_with = "split")]
    kfold: Option<usize>,
    /// Retrain on this training fraction and score the rest.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    roc: Option<PathBuf>,
    /// Overrides the training seed stored in the model.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first) and runs one subcommand. Returns 0 on
/// success, 2 on a usage error and 1 on any other failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Scalogram(a) => export_scalograms(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = GenSpec::new(a.profile, a.per_class, a.seed);
    spec.fs_hz = a.fs_hz;
    spec.window_s = a.window_s;
    spec.ranges.snr_db = match a.snr_db.as_str() {
        "clean" => None,
        s => Some(s.parse::<Sampling>()?),
    };
    let ds = gen_dataset(&spec)?;
    io::write_dataset(&ds, &a.out)?;
    eprintln!("wrote {} segments to {}", ds.len(), a.out.display());
    Ok(())
}

fn export_scalograms(a: ScalogramArgs) -> Result<()> {
    let ds = io::read_dataset(&a.data)?;
    let cfg = a.scalogram.config();
    cfg.validate()?;
    fs::create_dir_all(&a.out_dir)?;
    let n = a.limit.map_or(ds.len(), |l| l.min(ds.len()));
    for seg in &ds.segments[..n] {
        let map = scalogram(seg, &cfg)?;
        let name = format!("{:06}_{}.pgm", seg.event_id, seg.label);
        io::write_tfmap_pgm(&map, &a.out_dir.join(name))?;
    }
    eprintln!("wrote {n} scalograms to {}", a.out_dir.display());
    Ok(())
}

fn write_reports(report: &EvaluationReport, csv: Option<&Path>, roc: Option<&Path>) -> Result<()> {
    if let Some(p) = csv {
        fs::write(p, report.to_csv())?;
    }
    if let Some(p) = roc {
        fs::write(p, report.roc_csv())?;
    }
    Ok(())
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,accuracy\n");
    for h in history {
        let _ = writeln!(out, "{},{:.6},{:.6}", h.epoch, h.loss, h.accuracy);
    }
    out
}

fn summary(report: &EvaluationReport) -> String {
    let m = &report.macro_avg;
    format!(
        "macro precision {:.4}  f1 {:.4}  specificity {:.4}  sensitivity {:.4}  accuracy {:.4}  (overall accuracy {:.4})",
        m.precision, m.f1, m.specificity, m.sensitivity, m.accuracy, report.overall_accuracy
    )
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = io::read_dataset(&a.data)?;
    let cfg = TrainConfig {
        kind: a.model,
        scalogram: a.scalogram.config(),
        pool_size: a.pool_size,
        coding: a.coding,
        svm: SvmConfig {
            kernel: match a.kernel {
                KernelArg::Linear => KernelChoice::Linear,
                KernelArg::Rbf => KernelChoice::Rbf { gamma: a.gamma },
            },
            c: a.c,
            ..SvmConfig::default()
        },
        hyper: TrainHyper {
            lr: a.lr,
            batch_size: a.batch,
            epochs: a.epochs,
            ..TrainHyper::default()
        },
        arch: None,
        seed: a.seed,
    };
    let out = pipeline::train_holdout(&ds, &cfg, a.split)?;
    io::save_model(&out.model, &a.out)?;
    write_reports(&out.report, a.report.as_deref(), a.roc.as_deref())?;
    if let Some(p) = &a.history {
        fs::write(p, history_csv(&out.history))?;
    }
    eprintln!(
        "trained {} on {} segments, held out {}; {:.1} s",
        a.model,
        out.split.train.len(),
        out.split.test.len(),
        out.report.runtime_s
    );
    eprintln!("{}", summary(&out.report));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = io::load_model(&a.model)?;
    let ds = io::read_dataset(&a.data)?;
    let mut cfg = model.config.clone();
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(k) = a.kfold {
        let cv = pipeline::cross_validate_model(&ds, &cfg, k)?;
        if let Some(p) = &a.report {
            fs::write(p, cv.to_csv())?;
        }
        if let Some(p) = &a.roc {
            fs::write(p, cv.pooled.roc_csv())?;
        }
        eprintln!("{k}-fold cross-validation, pooled {}", summary(&cv.pooled));
        return Ok(());
    }
    let report = match a.split {
        Some(frac) => pipeline::train_holdout(&ds, &cfg, frac)?.report,
        None => model.evaluate(&ds)?,
    };
    write_reports(&report, a.report.as_deref(), a.roc.as_deref())?;
    eprintln!("{}", summary(&report));
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = io::load_model(&a.model)?;
    let ds = io::read_dataset(&a.data)?;
    let maps = pipeline::scalograms(&ds.segments, model.scalogram_cfg())?;
    let refs: Vec<_> = maps.iter().collect();
    let preds = model.predict_maps(&refs)?;
    let mut out = String::from("event_id,label,predicted");
    for c in &model.class_names {
        let _ = write!(out, ",score_{c}");
    }
    out.push('\n');
    for (seg, p) in ds.segments.iter().zip(&preds) {
        let _ = write!(
            out,
            "{},{},{}",
            seg.event_id, seg.label, model.class_names[p.class]
        );
        for s in &p.per_class_score {
            let _ = write!(out, ",{s:.6}");
        }
        out.push('\n');
    }
    match &a.out {
        Some(p) => fs::write(p, out)?,
        None => print!("{out}"),
    }
    Ok(())
}
