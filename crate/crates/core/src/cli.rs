//! Command-line front end. Every subcommand is also callable in-process
//! through its `cmd_*` function, which is how the reproduction driver uses it.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::coatgen::{
    generate_herd, identities, load_herd, save_herd, GrayScottParams, HerdConfig, HerdManifest,
    Instance,
};
use crate::dataset::{make_class_splits, make_openset_splits, split_file_name, SplitFile};
use crate::detgeom::{
    average_precision, detection_map, ground_truth_map, load_annotations, nms, ApResult,
    DEFAULT_CONFIDENCE_THRESHOLD, DEFAULT_IOU_THRESHOLD,
};
use crate::embednet::{
    epoch_log_csv, load_checkpoint, save_checkpoint, NetConfig, TrainConfig, TrainOutcome,
};
use crate::error::{Error, Result};
use crate::linalg::pca_project_2d;
use crate::losses::{LossConfig, LossKind};
use crate::openset::{
    closed_set_baseline, evaluate_split, parse_summary_csv, results_csv, run_seed, summary_csv,
    sweep_splits, train_and_evaluate, EvalResult, SweepConfig, SweepRun, SweepTable,
};
use crate::plot::{openness_svg, pr_curve_svg, scatter_svg};
use crate::repro::{run_repro, ReproOptions};

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "HERDMETRIC_SEED";
pub const CONFIG_FILE: &str = "config.json";

/// Openness ratios of the full sweep.
pub const FULL_RATIOS: [f64; 9] = [0.1, 0.17, 0.25, 0.33, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Parser)]
#[command(
    name = "herdmetric",
    version,
    about = "Synthetic herd generation, metric-learning training and open-set evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a herd of coat patterns and write PGM instances plus a manifest.
    Generate(GenerateArgs),
    /// Write class splits and open-set splits for a herd.
    Split(SplitArgs),
    /// Train one model on one open-set split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one open-set split.
    Eval(EvalArgs),
    /// Train and evaluate every loss kind over openness ratios and repetitions.
    Sweep(SweepArgs),
    /// Average precision of a detection file against ground truth.
    DetEval(DetEvalArgs),
    /// Accuracy-vs-openness plot from a summary CSV, or a 2-D embedding plot.
    Plot(PlotArgs),
    /// Run the whole pipeline at desk scale and check the acceptance criteria.
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Master seed; falls back to $HERDMETRIC_SEED, then to 42.
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub identities: usize,
    #[arg(long, default_value_t = 40)]
    pub per_identity: usize,
    /// Gray-Scott integration steps per pattern.
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub herd: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

/// Optimizer, batch and network settings shared by `train` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    /// Identities per batch.
    #[arg(long, default_value_t = 8)]
    pub batch_p: usize,
    /// Instances per identity in a batch.
    #[arg(long, default_value_t = 2)]
    pub batch_k: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// Neighbours in the kNN vote.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Weight of the metric term in the combined losses.
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// Triplet and contrastive margin.
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    /// Average-pooling window before the linear layer.
    #[arg(long, default_value_t = NetConfig::default().pool)]
    pub pool: usize,
}

impl Default for TrainOpts {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_p: t.batch_p,
            batch_k: t.batch_k,
            lr: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            k: t.knn_k,
            lambda: t.loss.lambda,
            margin: t.loss.margin,
            pool: t.net.pool,
        }
    }
}

impl TrainOpts {
    pub fn to_config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_p: self.batch_p,
            batch_k: self.batch_k,
            learning_rate: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            knn_k: self.k,
            loss: LossConfig {
                margin: self.margin,
                lambda: self.lambda,
                ..LossConfig::default()
            },
            net: NetConfig {
                pool: self.pool,
                ..NetConfig::default()
            },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Locates one split file inside a splits directory.
#[derive(Debug, Clone, Args)]
pub struct SplitRef {
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
}

impl SplitRef {
    pub fn path(&self) -> PathBuf {
        self.splits.join(split_file_name(self.ratio, self.rep))
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub herd: PathBuf,
    #[command(flatten)]
    pub split: SplitRef,
    #[arg(long)]
    pub loss: LossKind,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub herd: PathBuf,
    #[command(flatten)]
    pub split: SplitRef,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Reject queries whose nearest gallery entry is further than this.
    #[arg(long)]
    pub max_distance: Option<f64>,
    /// Score through the classification head instead of kNN.
    #[arg(long)]
    pub closed_set: bool,
    /// Directory for `results.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub herd: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Read splits from this directory instead of deriving them from the seed.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = FULL_RATIOS)]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_values_t = LossKind::SWEEP)]
    pub losses: Vec<LossKind>,
    #[arg(long)]
    pub max_distance: Option<f64>,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct DetEvalArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    pub confidence: f64,
    /// Apply non-maximum suppression at this IoU threshold first.
    #[arg(long)]
    pub nms: Option<f64>,
    /// Write the precision-recall curve as SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Summary CSV from `sweep`.
    #[arg(long, conflicts_with = "checkpoint")]
    pub summary: Option<PathBuf>,
    /// Checkpoint whose embeddings are projected to 2-D.
    #[arg(long, requires_all = ["herd", "splits", "ratio"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub herd: Option<PathBuf>,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReproArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub identities: usize,
    #[arg(long, default_value_t = 40)]
    pub per_identity: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    /// Required open-set accuracy of softmax-rtl at openness 0.5.
    #[arg(long, default_value_t = 0.80)]
    pub min_accuracy: f64,
    /// Required lead of softmax-rtl over the closed-set baseline at openness 0.5.
    #[arg(long, default_value_t = 0.20)]
    pub min_gap: f64,
    #[command(flatten)]
    pub seed: SeedArg,
}

/// Resolved settings of one command, written as `config.json` into its
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub herd: Option<HerdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub herd_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_kind: Option<LossKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_kinds: Option<Vec<LossKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_enabled: Option<bool>,
    /// Step size after momentum compensation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<f64>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    fn new(subcommand: &str, master_seed: u64, output_dir: &Path) -> Self {
        Self {
            subcommand: subcommand.into(),
            master_seed,
            herd: None,
            herd_dir: None,
            split_file: None,
            loss_kind: None,
            loss_kinds: None,
            train: None,
            momentum_enabled: None,
            effective_learning_rate: None,
            ratios: None,
            reps: None,
            max_distance: None,
            output_dir: output_dir.to_path_buf(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_text(
            &dir.join(CONFIG_FILE),
            &(serde_json::to_string_pretty(self).expect("config serializes") + "\n"),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, &e))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(Error::Config(format!("ratios must lie in (0, 1), got {ratios:?}")));
    }
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<HerdManifest> {
    let config = HerdConfig {
        gray_scott: GrayScottParams {
            steps: args.steps,
            ..GrayScottParams::default()
        },
        ..HerdConfig::new(args.identities, args.per_identity, args.seed.seed)
    };
    config.validate()?;
    ensure_dir(&args.out)?;
    let herd = generate_herd(&config)?;
    let manifest = save_herd(&args.out, &config, &herd)?;
    let mut rc = RunConfig::new("generate", args.seed.seed, &args.out);
    rc.herd = Some(config);
    rc.save(&args.out)?;
    println!(
        "wrote {} instances of {} identities to {}",
        herd.len(),
        config.num_identities,
        args.out.display()
    );
    Ok(manifest)
}

/// Writes one split file per `(ratio, repetition)`; returns their paths.
pub fn cmd_split(args: &SplitArgs) -> Result<Vec<PathBuf>> {
    check_ratios(&args.ratios)?;
    if args.reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    let (_, herd) = load_herd(&args.herd)?;
    let ids = identities(&herd);
    let classes = make_class_splits(&herd, args.seed.seed)?;
    let splits = make_openset_splits(&ids, &args.ratios, args.reps, args.seed.seed)?;
    ensure_dir(&args.out)?;
    let mut paths = Vec::with_capacity(splits.len());
    for split in &splits {
        let path = args
            .out
            .join(split_file_name(split.openness_ratio, split.repetition_index));
        SplitFile::new(split, &classes, &ids)?.save(&path)?;
        paths.push(path);
    }
    let mut rc = RunConfig::new("split", args.seed.seed, &args.out);
    rc.herd_dir = Some(args.herd.clone());
    rc.ratios = Some(args.ratios.clone());
    rc.reps = Some(args.reps);
    rc.save(&args.out)?;
    println!("wrote {} split files to {}", paths.len(), args.out.display());
    Ok(paths)
}

fn load_split(split: &SplitRef) -> Result<SplitFile> {
    SplitFile::load(&split.path())
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const OPENNESS_PLOT_FILE: &str = "accuracy_vs_openness.svg";

pub fn cmd_train(args: &TrainArgs) -> Result<(TrainOutcome, EvalResult)> {
    let split_file = load_split(&args.split)?;
    let split = split_file.open_set();
    let config = args.train.to_config(run_seed(
        args.seed.seed,
        split.openness_ratio,
        split.repetition_index,
    ))?;
    let (_, herd) = load_herd(&args.herd)?;
    let classes = split_file.class_splits();
    ensure_dir(&args.out)?;
    let (outcome, result) =
        train_and_evaluate(&herd, &split, &classes, args.loss, &config, None)?;
    save_checkpoint(&args.out.join(CHECKPOINT_FILE), &outcome.model)?;
    write_text(&args.out.join(EPOCH_LOG_FILE), &epoch_log_csv(&outcome.log))?;
    let mut rc = RunConfig::new("train", args.seed.seed, &args.out);
    rc.herd_dir = Some(args.herd.clone());
    rc.split_file = Some(args.split.path());
    rc.loss_kind = Some(args.loss);
    rc.train = Some(config);
    rc.momentum_enabled = Some(outcome.momentum_enabled);
    rc.effective_learning_rate = Some(outcome.learning_rate);
    rc.save(&args.out)?;
    println!(
        "{}: best validation accuracy {:.4} at epoch {}, test accuracy {:.4}",
        args.loss,
        outcome.pocket_history.last().copied().unwrap_or(0.0),
        outcome.best_epoch,
        result.accuracy
    );
    Ok((outcome, result))
}

fn single_run_csv(loss: &str, result: &EvalResult) -> String {
    format!(
        "loss_kind,ratio,repetition,accuracy,err_known_frac,err_unknown_frac\n{loss},{:.2},{},{:.6},{:.6},{:.6}\n",
        result.ratio,
        result.repetition,
        result.accuracy,
        result.error_known_fraction,
        result.error_unknown_fraction
    )
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalResult> {
    let split_file = load_split(&args.split)?;
    let split = split_file.open_set();
    let classes = split_file.class_splits();
    let (_, herd) = load_herd(&args.herd)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let result = if args.closed_set {
        closed_set_baseline(&model, &split, &classes, &herd)?
    } else {
        evaluate_split(&model, &split, &classes, &herd, args.k, args.max_distance)?
    };
    if let Some(out) = &args.out {
        let label = if args.closed_set { "closed-set" } else { "knn" };
        write_text(&out.join(RESULTS_FILE), &single_run_csv(label, &result))?;
    }
    println!(
        "accuracy {:.4} (errors on known {:.4}, unknown {:.4})",
        result.accuracy, result.error_known_fraction, result.error_unknown_fraction
    );
    Ok(result)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepTable> {
    check_ratios(&args.ratios)?;
    if args.reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    if args.losses.is_empty() {
        return Err(Error::Config("at least one loss kind is required".into()));
    }
    let train = args.train.to_config(0)?;
    let (_, herd) = load_herd(&args.herd)?;
    let (classes, splits) = match &args.splits {
        Some(dir) => {
            let mut classes = None;
            let mut splits = Vec::new();
            for &ratio in &args.ratios {
                for rep in 0..args.reps {
                    let file = SplitFile::load(&dir.join(split_file_name(ratio, rep)))?;
                    classes.get_or_insert_with(|| file.class_splits());
                    splits.push(file.open_set());
                }
            }
            (classes.expect("at least one split"), splits)
        }
        None => (
            make_class_splits(&herd, args.seed.seed)?,
            make_openset_splits(&identities(&herd), &args.ratios, args.reps, args.seed.seed)?,
        ),
    };
    let config = SweepConfig {
        train,
        ratios: args.ratios.clone(),
        reps: args.reps,
        loss_kinds: args.losses.clone(),
        master_seed: args.seed.seed,
        max_distance: args.max_distance,
    };
    let table = sweep_splits(&herd, &classes, &splits, &config)?;
    ensure_dir(&args.out)?;
    write_text(&args.out.join(RESULTS_FILE), &results_csv(&table.runs))?;
    write_text(&args.out.join(SUMMARY_FILE), &summary_csv(&table.summary))?;
    write_text(&args.out.join(OPENNESS_PLOT_FILE), &openness_svg(&table.summary))?;
    let mut rc = RunConfig::new("sweep", args.seed.seed, &args.out);
    rc.herd_dir = Some(args.herd.clone());
    rc.loss_kinds = Some(args.losses.clone());
    rc.train = Some(config.train.clone());
    rc.ratios = Some(args.ratios.clone());
    rc.reps = Some(args.reps);
    rc.max_distance = args.max_distance;
    rc.save(&args.out)?;
    print!("{}", summary_csv(&table.summary));
    Ok(table)
}

pub fn cmd_det_eval(args: &DetEvalArgs) -> Result<ApResult> {
    let dets = detection_map(&load_annotations(&args.detections)?)?;
    let gts = ground_truth_map(&load_annotations(&args.ground_truth)?)?;
    let dets = match args.nms {
        Some(t) => dets
            .into_iter()
            .map(|(id, d)| Ok((id, nms(&d, t)?)))
            .collect::<Result<_>>()?,
        None => dets,
    };
    let result = average_precision(&dets, &gts, args.iou, args.confidence)?;
    if let Some(path) = &args.plot {
        write_text(path, &pr_curve_svg(&result.curve, result.ap))?;
    }
    println!("AP {:.4}", result.ap);
    Ok(result)
}

/// Projects every instance of the herd with a checkpoint's network.
pub fn embedding_svg(herd: &[Instance], model_path: &Path, split: &SplitFile) -> Result<String> {
    let model = load_checkpoint(model_path)?;
    let embeddings = herd
        .iter()
        .map(|i| model.net.forward(i))
        .collect::<Result<Vec<_>>>()?;
    let points = pca_project_2d(&embeddings)?;
    let labels: Vec<u32> = herd.iter().map(|i| i.identity_id).collect();
    let unknown: BTreeSet<u32> = split.unknown.iter().copied().collect();
    Ok(scatter_svg(
        &format!("Embedding (PCA), openness {:.2}", split.ratio),
        &points,
        &labels,
        &unknown,
    ))
}

pub fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let svg = match (&args.summary, &args.checkpoint) {
        (Some(summary), None) => {
            let text = fs::read_to_string(summary).map_err(|e| Error::io(summary, e))?;
            openness_svg(&parse_summary_csv(&text)?)
        }
        (None, Some(ckpt)) => {
            let split = SplitRef {
                splits: args.splits.clone().expect("required by clap"),
                ratio: args.ratio.expect("required by clap"),
                rep: args.rep,
            };
            let (_, herd) = load_herd(args.herd.as_ref().expect("required by clap"))?;
            embedding_svg(&herd, ckpt, &load_split(&split)?)?
        }
        _ => {
            return Err(Error::Config(
                "plot needs either --summary or --checkpoint".into(),
            ))
        }
    };
    write_text(&args.out, &svg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn cmd_repro(args: &ReproArgs) -> Result<bool> {
    let opts = ReproOptions {
        out: args.out.clone(),
        seed: args.seed.seed,
        identities: args.identities,
        per_identity: args.per_identity,
        ratios: args.ratios.clone(),
        reps: args.reps,
        epochs: args.epochs,
        min_accuracy: args.min_accuracy,
        min_gap: args.min_gap,
        ..ReproOptions::default()
    };
    let report = run_repro(&opts)?;
    print!("{}", report.to_markdown());
    Ok(report.all_passed())
}

/// Sweep rows of one loss at one ratio.
pub fn runs_at<'a>(runs: &'a [SweepRun], kind: LossKind, ratio: f64) -> Vec<&'a SweepRun> {
    runs.iter()
        .filter(|r| r.loss_kind == kind && r.result.ratio == ratio)
        .collect()
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Generate(a) => cmd_generate(a).map(|_| 0),
        Command::Split(a) => cmd_split(a).map(|_| 0),
        Command::Train(a) => cmd_train(a).map(|_| 0),
        Command::Eval(a) => cmd_eval(a).map(|_| 0),
        Command::Sweep(a) => cmd_sweep(a).map(|_| 0),
        Command::DetEval(a) => cmd_det_eval(a).map(|_| 0),
        Command::Plot(a) => cmd_plot(a).map(|_| 0),
        Command::Repro(a) => cmd_repro(a).map(|ok| if ok { 0 } else { 1 }),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code:
/// 0 success, 1 failed acceptance check, 2 usage or configuration error,
/// 3 data error, 4 numerical instability.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
