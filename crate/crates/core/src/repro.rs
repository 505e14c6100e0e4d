//! Desk-scale reproduction driver: runs the whole pipeline through the CLI
//! command functions and checks the acceptance criteria against the outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cli::{
    cmd_generate, cmd_plot, cmd_split, cmd_sweep, cmd_train, write_text, GenerateArgs, PlotArgs,
    SeedArg, SplitArgs, SplitRef, SweepArgs, TrainArgs, TrainOpts, CHECKPOINT_FILE, RESULTS_FILE,
    SUMMARY_FILE,
};
use crate::coatgen::{generate_herd, identities, GrayScottParams, HerdConfig};
use crate::dataset::{make_class_splits, make_openset_splits, TEST_PER_CLASS};
use crate::detgeom::{
    average_precision, decode_offsets, encode_offsets, focal_loss, iou, nms, smooth_l1, Anchor,
    Box, Detection, FocalParams, ImageId,
};
use crate::error::{Error, Result};
use crate::gradcheck::gradient_check;
use crate::linalg::Rng;
use crate::losses::{LossConfig, LossKind, MetricBase};
use crate::mining::{batch_hard_loss, brute_force_hard, TripletBatch};
use crate::openset::{SummaryRow, SweepTable};

pub const REPORT_FILE: &str = "REPORT.md";
pub const EMBEDDING_PLOT_FILE: &str = "embedding_pca.svg";

/// Random problems per loss kind in the gradient check.
pub const GRADCHECK_PER_KIND: usize = 17;
pub const MINING_BATCHES: usize = 1000;

#[derive(Debug, Clone)]
pub struct ReproOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub identities: usize,
    pub per_identity: usize,
    pub ratios: Vec<f64>,
    pub reps: usize,
    pub epochs: usize,
    pub min_accuracy: f64,
    pub min_gap: f64,
    /// Tolerance of the softmax-rtl versus triplet comparison.
    pub ordering_tolerance: f64,
}

impl Default for ReproOptions {
    fn default() -> Self {
        Self {
            out: PathBuf::from("repro"),
            seed: crate::cli::DEFAULT_SEED,
            identities: 16,
            per_identity: 40,
            ratios: vec![0.25, 0.5, 0.75],
            reps: 3,
            epochs: 40,
            min_accuracy: 0.80,
            min_gap: 0.20,
            ordering_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionRow {
    pub name: String,
    pub bound: String,
    pub measured: String,
    pub passed: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ReproReport {
    pub rows: Vec<CriterionRow>,
    pub summary: Vec<SummaryRow>,
    pub out: PathBuf,
}

impl ReproReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, name: &str) -> Option<&CriterionRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Reproduction report\n\n");
        s.push_str("| criterion | bound | measured | pass | seconds |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.1} |",
                r.name,
                r.bound,
                r.measured,
                if r.passed { "yes" } else { "NO" },
                r.seconds
            );
        }
        s.push_str("\n## Accuracy by openness\n\n| loss | ratio | mean | min | max |\n|---|---|---|---|---|\n");
        for row in &self.summary {
            let _ = writeln!(
                s,
                "| {} | {:.2} | {:.2} | {:.2} | {:.2} |",
                row.loss_kind,
                row.ratio,
                100.0 * row.mean,
                100.0 * row.min,
                100.0 * row.max
            );
        }
        s
    }
}

/// Wall-clock timer of one criterion.
pub struct Timer(Instant);

impl Timer {
    pub fn start() -> Self {
        Self(Instant::now())
    }

    pub fn row(&self, name: &str, bound: String, measured: String, passed: bool) -> CriterionRow {
        CriterionRow {
            name: name.into(),
            bound,
            measured,
            passed,
            seconds: self.0.elapsed().as_secs_f64(),
        }
    }
}

pub fn check_gradients(seed: u64) -> Result<CriterionRow> {
    let t = Timer::start();
    let report = gradient_check(seed, GRADCHECK_PER_KIND)?;
    let worst = report.max_relative_error();
    let configs = report.configurations();
    Ok(t.row(
        "gradients",
        "max rel. error <= 1e-4 over >= 100 configs, < 60 s".into(),
        format!("{worst:.2e} over {configs} configs"),
        worst <= 1e-4 && configs >= 100 && t.0.elapsed().as_secs_f64() < 60.0,
    ))
}

/// Random `P x K` batch; every other batch is snapped to a coarse lattice so
/// equal distances (and hence tie-breaking) occur often.
pub fn random_mining_batch(rng: &mut Rng) -> Result<TripletBatch> {
    let p = 2 + rng.below(7);
    let k = 2 + rng.below(3);
    let dim = 1 + rng.below(4);
    let coarse = rng.below(2) == 0;
    let mut embeddings: Vec<Vec<f64>> = Vec::with_capacity(p * k);
    let mut labels = Vec::with_capacity(p * k);
    for c in 0..p {
        for _ in 0..k {
            embeddings.push(
                (0..dim)
                    .map(|_| {
                        if coarse {
                            rng.below(3) as f64
                        } else {
                            rng.normal()
                        }
                    })
                    .collect(),
            );
            labels.push(100 + c as u32);
        }
    }
    // Interleave classes so positions do not follow label order.
    let mut order: Vec<usize> = (0..p * k).collect();
    rng.shuffle(&mut order);
    TripletBatch::new(
        order.iter().map(|&i| embeddings[i].clone()).collect(),
        order.iter().map(|&i| labels[i]).collect(),
    )
}

pub fn check_mining(seed: u64) -> Result<CriterionRow> {
    let t = Timer::start();
    let mut rng = Rng::new(seed);
    let cfg = LossConfig::default();
    let mut mismatches = 0;
    for _ in 0..MINING_BATCHES {
        let batch = random_mining_batch(&mut rng)?;
        let fast = batch_hard_loss(&batch, &cfg, MetricBase::Triplet)?.selections;
        if fast != brute_force_hard(&batch)? {
            mismatches += 1;
        }
    }
    Ok(t.row(
        "mining oracle",
        format!("0 mismatches in {MINING_BATCHES} batches, < 30 s"),
        format!("{mismatches} mismatches"),
        mismatches == 0 && t.0.elapsed().as_secs_f64() < 30.0,
    ))
}

/// Hand-computed detection examples; returns the labels of those that fail.
pub fn detection_hand_examples() -> Result<(usize, Vec<String>)> {
    let bx = |x1, y1, x2, y2| Box::new(x1, y1, x2, y2);
    let det = |b: Box, c| Detection::new(b, c);
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let a = bx(0.0, 0.0, 2.0, 2.0)?;
    checks.push(("iou identical", iou(&a, &a)? == 1.0));
    checks.push(("iou disjoint", iou(&a, &bx(5.0, 5.0, 6.0, 6.0)?)? == 0.0));
    checks.push((
        "iou 1/7",
        close(iou(&a, &bx(1.0, 1.0, 3.0, 3.0)?)?, 1.0 / 7.0, 1e-9),
    ));

    checks.push(("smooth_l1(0)", smooth_l1(0.0) == 0.0));
    checks.push(("smooth_l1(0.5)", close(smooth_l1(0.5), 0.125, 1e-9)));
    checks.push(("smooth_l1(1)", close(smooth_l1(1.0), 0.5, 1e-9)));
    checks.push(("smooth_l1(3)", close(smooth_l1(3.0), 2.5, 1e-9)));

    let ce = FocalParams {
        gamma: 0.0,
        alpha: 1.0,
        lambda: 1.0,
    };
    checks.push(("focal ln 2", close(focal_loss(0.5, 1, &ce)?, 2f64.ln(), 1e-9)));
    checks.push((
        "focal p=0.9",
        close(
            focal_loss(0.9, 1, &FocalParams::default())?,
            0.25 * 0.01 * -(0.9f64.ln()),
            1e-9,
        ),
    ));
    let mut grid_ok = true;
    for i in 1..=1000 {
        let p = i as f64 / 1001.0;
        grid_ok &= close(focal_loss(p, 1, &ce)?, -p.ln(), 1e-12);
    }
    checks.push(("focal = CE on 1000-point grid", grid_ok));

    let anchor = Anchor::new(bx(0.0, 0.0, 10.0, 10.0)?)?;
    let gt = bx(1.0, 2.0, 11.0, 12.0)?;
    let t = encode_offsets(&gt, &anchor)?;
    checks.push((
        "encode offsets",
        t.iter().zip([0.1, 0.2, 0.1, 0.2]).all(|(v, e)| close(*v, e, 1e-9)),
    ));
    let back = decode_offsets(&t, &anchor)?;
    checks.push((
        "decode offsets",
        back.coords().iter().zip(gt.coords()).all(|(a, b)| close(*a, b, 1e-9)),
    ));
    checks.push(("decode zero", decode_offsets(&[0.0; 4], &anchor)? == anchor.bbox));

    let ba = bx(0.0, 0.0, 2.0, 1.0)?;
    let bb = bx(1.0, 0.0, 3.0, 1.0)?;
    let bc = bx(2.0, 0.0, 4.0, 1.0)?;
    let kept = nms(&[det(bc, 0.7)?, det(ba, 0.9)?, det(bb, 0.8)?], 0.28)?;
    checks.push(("nms chain", kept == vec![det(ba, 0.9)?, det(bc, 0.7)?]));
    let kept = nms(&[det(a, 0.8)?, det(a, 0.9)?], 0.28)?;
    checks.push(("nms duplicate", kept == vec![det(a, 0.9)?]));

    let g1 = bx(0.0, 0.0, 10.0, 10.0)?;
    let g2 = bx(20.0, 20.0, 30.0, 30.0)?;
    let miss = bx(50.0, 50.0, 60.0, 60.0)?;
    let ap = |dets: Vec<Detection>, gts: Vec<Box>| -> Result<f64> {
        let d = BTreeMap::from([(ImageId::Number(0), dets)]);
        let g = BTreeMap::from([(ImageId::Number(0), gts)]);
        Ok(average_precision(&d, &g, 0.5, 0.5)?.ap)
    };
    checks.push((
        "AP 5/6",
        close(
            ap(vec![det(g1, 0.9)?, det(miss, 0.8)?, det(g2, 0.7)?], vec![g1, g2])?,
            5.0 / 6.0,
            1e-9,
        ),
    ));
    checks.push(("AP perfect", ap(vec![det(g1, 0.9)?, det(g2, 0.8)?], vec![g1, g2])? == 1.0));
    checks.push(("AP all wrong", ap(vec![det(miss, 0.9)?], vec![g1])? == 0.0));

    let failed = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name.to_string())
        .collect();
    Ok((checks.len(), failed))
}

pub fn check_detection() -> Result<CriterionRow> {
    let t = Timer::start();
    let (n, failed) = detection_hand_examples()?;
    Ok(t.row(
        "detection math",
        format!("all {n} hand examples to 1e-9 (CE grid 1e-12), < 10 s"),
        if failed.is_empty() {
            format!("{n}/{n} exact")
        } else {
            format!("failed: {}", failed.join(", "))
        },
        failed.is_empty() && t.0.elapsed().as_secs_f64() < 10.0,
    ))
}

/// 46 identities at openness 0.5 leave 23 unknown, and every class keeps
/// exactly ten test instances.
pub fn check_protocol(seed: u64) -> Result<CriterionRow> {
    let t = Timer::start();
    let config = HerdConfig {
        gray_scott: GrayScottParams {
            steps: 20,
            ..GrayScottParams::default()
        },
        ..HerdConfig::new(46, 20, seed)
    };
    let herd = generate_herd(&config)?;
    let splits = make_openset_splits(&identities(&herd), &[0.5], 1, seed)?;
    let unknown = splits[0].unknown.len();
    let classes = make_class_splits(&herd, seed)?;
    let test_ok = classes.len() == 46 && classes.iter().all(|c| c.test.len() == TEST_PER_CLASS);
    Ok(t.row(
        "protocol fidelity",
        "23 unknown of 46 at 0.5; 10 test instances per class".into(),
        format!(
            "{unknown} unknown; test sizes {}",
            if test_ok { "all 10" } else { "NOT all 10" }
        ),
        unknown == 23 && test_ok,
    ))
}

fn mean_at(summary: &[SummaryRow], kind: LossKind, ratio: f64) -> Option<f64> {
    summary
        .iter()
        .find(|r| r.loss_kind == kind && (r.ratio - ratio).abs() < 1e-9)
        .map(|r| r.mean)
}

pub fn check_closed_set_ceiling(table: &SweepTable, ratios: &[f64], t: &Timer) -> CriterionRow {
    let baseline: Vec<_> = table
        .runs
        .iter()
        .filter(|r| r.loss_kind == LossKind::Softmax)
        .collect();
    let over = baseline
        .iter()
        .filter(|r| r.result.accuracy > r.result.known_query_fraction())
        .count();
    let means: Vec<f64> = ratios
        .iter()
        .filter_map(|&r| mean_at(&table.summary, LossKind::Softmax, r))
        .collect();
    let decreasing = means.len() == ratios.len() && means.windows(2).all(|w| w[1] < w[0]);
    let listed: Vec<String> = means.iter().map(|m| format!("{:.2}", 100.0 * m)).collect();
    t.row(
        "closed-set ceiling",
        "baseline <= known fraction on every split; means decrease with openness".into(),
        format!(
            "{over}/{} splits over ceiling; means {}",
            baseline.len(),
            listed.join(" > ")
        ),
        over == 0 && !baseline.is_empty() && decreasing,
    )
}

pub fn check_open_set_superiority(
    summary: &[SummaryRow],
    min_accuracy: f64,
    min_gap: f64,
    t: &Timer,
) -> CriterionRow {
    let rtl = mean_at(summary, LossKind::SoftmaxReciprocalTriplet, 0.5);
    let base = mean_at(summary, LossKind::Softmax, 0.5);
    let (passed, measured) = match (rtl, base) {
        (Some(r), Some(b)) => (
            r > min_accuracy && r - b >= min_gap,
            format!(
                "softmax-rtl {:.2}, baseline {:.2}, gap {:.2}",
                100.0 * r,
                100.0 * b,
                100.0 * (r - b)
            ),
        ),
        _ => (false, "openness 0.5 missing from the sweep".into()),
    };
    t.row(
        "open-set superiority",
        format!(
            "softmax-rtl > {:.0}% and >= baseline + {:.0} points at 0.5, <= 20 min",
            100.0 * min_accuracy,
            100.0 * min_gap
        ),
        measured,
        passed && t.0.elapsed().as_secs_f64() <= 20.0 * 60.0,
    )
}

pub fn check_loss_ordering(
    summary: &[SummaryRow],
    ratios: &[f64],
    tolerance: f64,
    t: &Timer,
) -> CriterionRow {
    let mut parts = Vec::new();
    let mut passed = true;
    for &ratio in ratios {
        match (
            mean_at(summary, LossKind::SoftmaxReciprocalTriplet, ratio),
            mean_at(summary, LossKind::Triplet, ratio),
        ) {
            (Some(a), Some(b)) => {
                passed &= a >= b - tolerance;
                parts.push(format!("{ratio:.2}: {:+.2}", 100.0 * (a - b)));
            }
            _ => passed = false,
        }
    }
    t.row(
        "loss ordering",
        format!(
            "softmax-rtl >= tl - {:.0} points at every ratio",
            100.0 * tolerance
        ),
        parts.join(", "),
        passed,
    )
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Byte comparison of every regular file under `a` against its twin under
/// `b`, skipping `config.json` (it records the output directory).
fn compare_trees(a: &Path, b: &Path) -> Result<Vec<PathBuf>> {
    let mut differing = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(a)
        .map_err(|e| Error::io(a, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(a, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name();
        let path = entry.path();
        if path.is_dir() {
            differing.extend(compare_trees(&path, &b.join(&name))?);
        } else if name != crate::cli::CONFIG_FILE {
            let twin = b.join(&name);
            if !twin.exists() || read(&path)? != read(&twin)? {
                differing.push(path);
            }
        }
    }
    Ok(differing)
}

/// Rows of a results CSV at one ratio and repetition, header first.
fn results_rows(csv: &str, ratio: f64, rep: usize) -> Vec<String> {
    let ratio = format!("{ratio:.2}");
    let rep = rep.to_string();
    csv.lines()
        .enumerate()
        .filter(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            *i == 0 || (f.len() > 2 && f[1] == ratio && f[2] == rep)
        })
        .map(|(_, l)| l.to_string())
        .collect()
}

struct Pipeline {
    herd: PathBuf,
    splits: PathBuf,
}

fn prepare(dir: &Path, opts: &ReproOptions) -> Result<Pipeline> {
    let seed = SeedArg { seed: opts.seed };
    let herd = dir.join("herd");
    let splits = dir.join("splits");
    cmd_generate(&GenerateArgs {
        out: herd.clone(),
        identities: opts.identities,
        per_identity: opts.per_identity,
        steps: GrayScottParams::default().steps,
        seed: seed.clone(),
    })?;
    cmd_split(&SplitArgs {
        herd: herd.clone(),
        out: splits.clone(),
        ratios: opts.ratios.clone(),
        reps: opts.reps,
        seed,
    })?;
    Ok(Pipeline { herd, splits })
}

fn sweep_args(p: &Pipeline, out: PathBuf, ratios: Vec<f64>, reps: usize, opts: &ReproOptions) -> SweepArgs {
    SweepArgs {
        herd: p.herd.clone(),
        out,
        splits: Some(p.splits.clone()),
        ratios,
        reps,
        losses: LossKind::SWEEP.to_vec(),
        max_distance: None,
        train: train_opts(opts),
        seed: SeedArg { seed: opts.seed },
    }
}

fn train_opts(opts: &ReproOptions) -> TrainOpts {
    TrainOpts {
        epochs: opts.epochs,
        ..TrainOpts::default()
    }
}

pub fn run_repro(opts: &ReproOptions) -> Result<ReproReport> {
    if !opts.ratios.iter().any(|r| (r - 0.5).abs() < 1e-9) {
        return Err(Error::Config("the reproduction needs openness 0.5 among the ratios".into()));
    }
    let out = &opts.out;
    let mut rows = vec![
        check_gradients(opts.seed)?,
        check_mining(opts.seed)?,
        check_detection()?,
    ];

    let pipeline_timer = Timer::start();
    let main = prepare(out, opts)?;
    let split = SplitRef {
        splits: main.splits.clone(),
        ratio: 0.5,
        rep: 0,
    };
    let train_dir = out.join("train");
    let (_, trained) = cmd_train(&TrainArgs {
        herd: main.herd.clone(),
        split: split.clone(),
        loss: LossKind::SoftmaxReciprocalTriplet,
        out: train_dir.clone(),
        train: train_opts(opts),
        seed: SeedArg { seed: opts.seed },
    })?;
    let sweep_dir = out.join("sweep");
    let table = cmd_sweep(&sweep_args(&main, sweep_dir.clone(), opts.ratios.clone(), opts.reps, opts))?;
    cmd_plot(&PlotArgs {
        out: out.join(EMBEDDING_PLOT_FILE),
        summary: None,
        checkpoint: Some(train_dir.join(CHECKPOINT_FILE)),
        herd: Some(main.herd.clone()),
        splits: Some(main.splits.clone()),
        ratio: Some(0.5),
        rep: 0,
    })?;

    rows.push(check_closed_set_ceiling(&table, &opts.ratios, &pipeline_timer));
    rows.push(check_open_set_superiority(
        &table.summary,
        opts.min_accuracy,
        opts.min_gap,
        &pipeline_timer,
    ));
    rows.push(check_loss_ordering(
        &table.summary,
        &opts.ratios,
        opts.ordering_tolerance,
        &pipeline_timer,
    ));

    let t = Timer::start();
    let twin_dir = out.join("rerun");
    let twin = prepare(&twin_dir, opts)?;
    let mut differing = compare_trees(&main.herd, &twin.herd)?;
    differing.extend(compare_trees(&main.splits, &twin.splits)?);
    cmd_sweep(&sweep_args(&twin, twin_dir.join("sweep"), vec![0.5], 1, opts))?;
    let full = String::from_utf8_lossy(&read(&sweep_dir.join(RESULTS_FILE))?).into_owned();
    let again = String::from_utf8_lossy(&read(&twin_dir.join("sweep").join(RESULTS_FILE))?).into_owned();
    let csv_match = results_rows(&full, 0.5, 0) == again.lines().map(str::to_string).collect::<Vec<_>>();
    let train_cell = table
        .runs
        .iter()
        .find(|r| {
            r.loss_kind == LossKind::SoftmaxReciprocalTriplet
                && (r.result.ratio - 0.5).abs() < 1e-9
                && r.result.repetition == 0
        })
        .map(|r| r.result.accuracy);
    let train_match = train_cell == Some(trained.accuracy);
    rows.push(t.row(
        "determinism",
        "rerun herd, splits and openness-0.5 results byte-identical; train equals sweep cell".into(),
        format!(
            "{} differing files; results {}; train cell {}",
            differing.len(),
            if csv_match { "identical" } else { "DIFFER" },
            if train_match { "identical" } else { "DIFFERS" }
        ),
        differing.is_empty() && csv_match && train_match,
    ));

    rows.push(check_protocol(opts.seed)?);

    let report = ReproReport {
        rows,
        summary: table.summary,
        out: out.clone(),
    };
    write_text(&out.join(REPORT_FILE), &report.to_markdown())?;
    // Keep a copy of the summary next to the report for quick inspection.
    fs::copy(sweep_dir.join(SUMMARY_FILE), out.join(SUMMARY_FILE)).map_err(|e| Error::io(out, e))?;
    Ok(report)
}
