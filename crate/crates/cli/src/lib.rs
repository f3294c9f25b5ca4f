//! The `aslab` command line: data generation, training, evaluation,
//! threshold curves and comparison reports.

pub mod config;
pub mod plot;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use aslnet::eval::{curve_std, dataset_oa_curve, default_thresholds, predict_samples};
use aslnet::metrics::{evaluate_pair, write_metrics_csv, MetricsAccumulator, MetricsReport};
use aslnet::synth::{generate_dataset, read_dataset, write_dataset, Sample};
use aslnet::train::{load_model, train_with_progress, write_log_csv, TrainState, LOG_HEADER};
use aslnet::{Error, Tensor};

use config::RunConfig;

pub const LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const THREADS_ENV: &str = "ASLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "aslab", version, about = "Adversarial shape learning for building segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of building scenes.
    GenData(GenDataArgs),
    /// Train a segmentation network.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write per-image metrics.
    Eval(EvalArgs),
    /// Overall accuracy across binarization thresholds.
    Curve(CurveArgs),
    /// Compare metrics files in a Markdown table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Seed of the first sample; sample i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for checkpoints, the training log and the config used.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lr_seg: Option<f64>,
    #[arg(long)]
    pub lr_disc: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub base_width: Option<usize>,
    /// Pixel loss only: no discriminator, β = 0.
    #[arg(long)]
    pub no_adversarial: bool,
    /// Replace the shape regularizer by a 1×1 head.
    #[arg(long)]
    pub no_sr: bool,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct Source {
    /// Checkpoint of the model to evaluate.
    #[arg(long, required_unless_present = "pred_from_labels")]
    pub checkpoint: Option<PathBuf>,
    /// Use the labels themselves as predictions.
    #[arg(long)]
    pub pred_from_labels: bool,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    /// Metrics CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Accepted for symmetry with other commands; evaluation is not random.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub source: Source,
    /// Curve CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// PNG path; defaults to the CSV path with a `.png` extension.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Comma-separated thresholds in (0, 1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics CSV files written by `eval`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Comma-separated method names; defaults to the file stems.
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
    /// Markdown output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// A usage error raised by the front end itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 2 for usage errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || matches!(cause.downcast_ref::<Error>(), Some(Error::Usage(_))) {
            return 2;
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Curve(a) => curve(&a),
        Command::Report(a) => report_cmd(&a),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn gen_data(a: &GenDataArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    cfg.scene.validate()?;
    let samples = generate_dataset(&cfg.scene, a.n, a.seed)?;
    create_dir(&a.out)?;
    write_dataset(&a.out, &samples, &cfg.scene)?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn load_data(dir: &Path) -> anyhow::Result<Vec<Sample>> {
    if !dir.is_dir() {
        return Err(anyhow!("dataset directory {} not found", dir.display()));
    }
    let samples = read_dataset(dir)?;
    if samples.is_empty() {
        return Err(UsageError(format!("dataset {} is empty", dir.display())).into());
    }
    Ok(samples)
}

/// Applies command-line overrides on top of the file configuration.
fn train_config(a: &TrainArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let t = &mut cfg.train;
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.alpha {
        t.alpha = v;
    }
    if let Some(v) = a.beta {
        t.beta = v;
    }
    if let Some(v) = a.lr_seg {
        t.lr_seg = v;
    }
    if let Some(v) = a.lr_disc {
        t.lr_disc = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if a.no_adversarial {
        t.adversarial = false;
        t.beta = 0.0;
    }
    if let Some(v) = a.base_width {
        cfg.model.seg.edfcn.base_width = v;
    }
    if a.no_sr {
        cfg.model.seg.shape_regularizer = false;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let cfg = train_config(a)?;
    let samples = load_data(&a.data)?;
    let mut state = match &a.resume {
        Some(path) => TrainState::load(path, cfg.train.clone())?,
        None => TrainState::new(cfg.model.seg, cfg.model.disc.clone(), cfg.train.clone())?,
    };
    create_dir(&a.out)?;
    fs::write(a.out.join(CONFIG_FILE), cfg.render())?;
    let log_path = a.out.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log, "{LOG_HEADER}")?;
    let total = state.config.epochs;
    let quiet = a.quiet;
    let mut write_err = None;
    let logs = train_with_progress(&mut state, &samples, Some(&a.out), |l| {
        if let Err(e) = writeln!(log, "{}", l.csv_row()).and_then(|_| log.flush()) {
            write_err.get_or_insert(e);
        }
        if !quiet {
            println!(
                "epoch {}/{total}: loss_dis {:.5} loss_pix {:.5} loss_shape {:.5} loss_seg {:.5}",
                l.epoch, l.loss_dis, l.loss_pix, l.loss_shape, l.loss_seg
            );
        }
    })?;
    if let Some(e) = write_err {
        return Err(anyhow::Error::new(e).context(format!("writing {}", log_path.display())));
    }
    // Rewrite in one piece so the file is complete even if appends raced a crash.
    let mut buf = Vec::new();
    write_log_csv(&mut buf, &logs)?;
    fs::write(&log_path, buf)?;
    println!("trained {} epochs; checkpoints in {}", logs.len(), a.out.display());
    Ok(())
}

fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(UsageError(format!("{THREADS_ENV} must be at least 1")).into());
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn label_tensor(s: &Sample) -> Tensor {
    s.label.to_tensor()
}

/// Probability maps for every sample, from a checkpoint or the labels.
fn predictions(src: &Source, cfg: &RunConfig, samples: &[Sample]) -> anyhow::Result<Vec<Tensor>> {
    if src.pred_from_labels {
        return Ok(samples.iter().map(label_tensor).collect());
    }
    let path = src.checkpoint.as_ref().expect("clap requires a checkpoint");
    let model = load_model(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let batch = cfg.eval_batch_size.max(1);
    let chunks: Vec<&[Sample]> = samples.chunks(batch).collect();
    let parts: Vec<aslnet::Result<Vec<Tensor>>> = chunks
        .par_iter()
        .map(|chunk| predict_samples(&model, chunk, batch))
        .collect();
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn image_name(i: usize) -> String {
    format!("img_{i:05}")
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::load(a.source.config.as_deref())?;
    let threshold = a.threshold.unwrap_or(cfg.train.binarize_threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(UsageError(format!("threshold {threshold} outside (0, 1)")).into());
    }
    let samples = load_data(&a.source.data)?;
    let pool = thread_pool()?;
    let (rows, total) = pool.install(|| -> anyhow::Result<_> {
        let probs = predictions(&a.source, &cfg, &samples)?;
        let reports: Vec<aslnet::Result<MetricsReport>> = probs
            .par_iter()
            .zip(samples.par_iter())
            .map(|(p, s)| evaluate_pair(p, &s.label, threshold))
            .collect();
        let mut acc = MetricsAccumulator::new();
        let mut rows = Vec::with_capacity(reports.len());
        for (i, r) in reports.into_iter().enumerate() {
            let r = r?;
            acc.add(&r);
            rows.push((image_name(i), r));
        }
        Ok((rows, acc.report()))
    })?;
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &rows, &total)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(&a.out, buf).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", MetricsReport::csv_header());
    println!("{}", total.csv_row("TOTAL"));
    Ok(())
}

pub fn curve_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("threshold,oa\n");
    for (t, oa) in points {
        s.push_str(&format!("{t},{oa:.8}\n"));
    }
    s
}

/// Parses a curve CSV back into `(threshold, oa)` pairs.
pub fn read_curve_csv(text: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    anyhow::ensure!(lines.next() == Some("threshold,oa"), "not a curve CSV");
    lines
        .map(|l| {
            let (t, oa) = l.split_once(',').ok_or_else(|| anyhow!("bad curve row `{l}`"))?;
            Ok((t.parse()?, oa.parse()?))
        })
        .collect()
}

pub fn curve(a: &CurveArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::load(a.source.config.as_deref())?;
    let thresholds = a.thresholds.clone().unwrap_or_else(default_thresholds);
    if thresholds.is_empty() {
        return Err(UsageError("no thresholds given".into()).into());
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(UsageError(format!("threshold {t} outside (0, 1)")).into());
    }
    let samples = load_data(&a.source.data)?;
    let pool = thread_pool()?;
    let probs = pool.install(|| predictions(&a.source, &cfg, &samples))?;
    let labels: Vec<_> = samples.iter().map(|s| &s.label).collect();
    let points = dataset_oa_curve(&probs, &labels, &thresholds)?;
    // The plot is drawn from the values as written, so both agree exactly.
    let csv = curve_csv(&points);
    let written = read_curve_csv(&csv)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(&a.out, &csv).with_context(|| format!("writing {}", a.out.display()))?;
    let png = a.plot.clone().unwrap_or_else(|| a.out.with_extension("png"));
    plot::plot_curve(&written).write_png(&png)?;
    println!("oa_std {:.8}", curve_std(&written));
    Ok(())
}

pub fn report_cmd(a: &ReportArgs) -> anyhow::Result<()> {
    let names: Vec<String> = match &a.names {
        Some(n) if n.len() != a.inputs.len() => {
            return Err(UsageError(format!("{} names for {} inputs", n.len(), a.inputs.len())).into());
        }
        Some(n) => n.clone(),
        None => a
            .inputs
            .iter()
            .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
            .collect(),
    };
    let rows = a
        .inputs
        .iter()
        .zip(&names)
        .map(|(p, n)| report::read_total(p, n))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let md = report::markdown(&rows);
    match &a.out {
        Some(path) => fs::write(path, &md).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{md}"),
    }
    Ok(())
}
