//! Open-set evaluation: enrol every non-test instance into a gallery, classify
//! test instances by k nearest neighbours, and sweep accuracy over openness.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coatgen::{identities, Instance};
use crate::dataset::{make_class_splits, make_openset_splits, ClassSplit, OpenSetSplit};
use crate::embednet::{train, EpochLog, Model, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, dist};
use crate::losses::LossKind;

/// Anything that maps an instance to an embedding.
pub trait Embedder {
    fn embed(&self, instance: &Instance) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Train,
    Val,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gallery {
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub membership: Vec<Membership>,
}

impl Gallery {
    pub fn push(&mut self, embedding: Vec<f64>, label: u32, membership: Membership) {
        self.embeddings.push(embedding);
        self.labels.push(label);
        self.membership.push(membership);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Majority vote over the `k` nearest gallery entries.
///
/// Neighbours are ranked by `(distance, label)`, so equidistant entries resolve
/// the same way whatever the gallery order. Vote ties go to the smaller summed
/// distance, then to the smaller label.
pub fn knn_classify(gallery: &Gallery, query: &[f64], k: usize) -> Result<u32> {
    Ok(knn_classify_with_rejection(gallery, query, k, None)?
        .expect("no rejection without a distance limit"))
}

/// As [`knn_classify`], but returns `None` when the nearest entry lies further
/// than `max_distance`.
pub fn knn_classify_with_rejection(
    gallery: &Gallery,
    query: &[f64],
    k: usize,
    max_distance: Option<f64>,
) -> Result<Option<u32>> {
    if gallery.is_empty() {
        return Err(Error::Evaluation("empty gallery".into()));
    }
    if k == 0 {
        return Err(Error::Evaluation("k must be >= 1".into()));
    }
    if gallery.embeddings[0].len() != query.len() {
        return Err(Error::Dimension(format!(
            "query has {} dims, gallery {}",
            query.len(),
            gallery.embeddings[0].len()
        )));
    }
    let mut ranked: Vec<(f64, u32)> = gallery
        .embeddings
        .iter()
        .zip(&gallery.labels)
        .map(|(e, &l)| (dist(e, query), l))
        .collect();
    let k = k.min(ranked.len());
    let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, cmp);
        ranked.truncate(k);
    }
    ranked.sort_by(cmp);
    if let Some(limit) = max_distance {
        if ranked[0].0 > limit {
            return Ok(None);
        }
    }
    let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for &(d, l) in &ranked {
        let e = votes.entry(l).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d;
    }
    let winner = votes
        .iter()
        .max_by(|(la, (va, sa)), (lb, (vb, sb))| {
            va.cmp(vb)
                .then(sb.total_cmp(sa))
                .then(lb.cmp(la))
        })
        .map(|(l, _)| *l)
        .expect("non-empty");
    Ok(Some(winner))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub instance_id: usize,
    pub true_label: u32,
    /// `None` when the query was rejected as an outlier.
    pub predicted: Option<u32>,
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ratio: f64,
    pub repetition: usize,
    pub accuracy: f64,
    /// Share of all errors made on known-class queries.
    pub error_known_fraction: f64,
    pub error_unknown_fraction: f64,
    pub records: Vec<QueryRecord>,
}

impl EvalResult {
    fn from_records(split: &OpenSetSplit, records: Vec<QueryRecord>) -> Self {
        let total = records.len();
        let correct = records
            .iter()
            .filter(|r| r.predicted == Some(r.true_label))
            .count();
        let errors = total - correct;
        let known_errors = records
            .iter()
            .filter(|r| r.known && r.predicted != Some(r.true_label))
            .count();
        let (ek, eu) = if errors > 0 {
            let ek = known_errors as f64 / errors as f64;
            (ek, (errors - known_errors) as f64 / errors as f64)
        } else {
            (0.0, 0.0)
        };
        Self {
            ratio: split.openness_ratio,
            repetition: split.repetition_index,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            error_known_fraction: ek,
            error_unknown_fraction: eu,
            records,
        }
    }

    /// Fraction of queries whose identity was seen in training.
    pub fn known_query_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.known).count() as f64 / self.records.len() as f64
    }
}

fn check_split(split: &OpenSetSplit, classes: &[ClassSplit], herd: &[Instance]) -> Result<()> {
    let herd_ids: BTreeSet<u32> = herd.iter().map(|i| i.identity_id).collect();
    let split_ids: BTreeSet<u32> = split.known.union(&split.unknown).copied().collect();
    if herd_ids != split_ids {
        return Err(Error::Evaluation(format!(
            "split covers {} identities, herd has {}",
            split_ids.len(),
            herd_ids.len()
        )));
    }
    let class_ids: BTreeSet<u32> = classes.iter().map(|c| c.identity_id).collect();
    if class_ids != herd_ids {
        return Err(Error::Evaluation("class splits do not cover the herd".into()));
    }
    for c in classes {
        for &i in c.train.iter().chain(&c.val).chain(&c.test) {
            match herd.get(i) {
                Some(inst) if inst.identity_id == c.identity_id => {}
                _ => {
                    return Err(Error::Evaluation(format!(
                        "instance {i} is not a member of identity {}",
                        c.identity_id
                    )))
                }
            }
        }
    }
    Ok(())
}

/// Gallery of every train and val instance of every class, known or not.
pub fn build_gallery(
    embedder: &dyn Embedder,
    classes: &[ClassSplit],
    herd: &[Instance],
) -> Result<Gallery> {
    let mut gallery = Gallery::default();
    for c in classes {
        for &i in &c.train {
            gallery.push(embedder.embed(&herd[i])?, c.identity_id, Membership::Train);
        }
        for &i in &c.val {
            gallery.push(embedder.embed(&herd[i])?, c.identity_id, Membership::Val);
        }
    }
    Ok(gallery)
}

/// Open-set kNN evaluation of one split. Queries are all test instances.
pub fn evaluate_split(
    embedder: &dyn Embedder,
    split: &OpenSetSplit,
    classes: &[ClassSplit],
    herd: &[Instance],
    k: usize,
    max_distance: Option<f64>,
) -> Result<EvalResult> {
    check_split(split, classes, herd)?;
    let gallery = build_gallery(embedder, classes, herd)?;
    let mut records = Vec::new();
    for c in classes {
        for &i in &c.test {
            let e = embedder.embed(&herd[i])?;
            records.push(QueryRecord {
                instance_id: i,
                true_label: c.identity_id,
                predicted: knn_classify_with_rejection(&gallery, &e, k, max_distance)?,
                known: split.known.contains(&c.identity_id),
            });
        }
    }
    Ok(EvalResult::from_records(split, records))
}

/// Closed-set classification through the model's head; only known
/// identities can ever be predicted.
pub fn closed_set_baseline(
    model: &Model,
    split: &OpenSetSplit,
    classes: &[ClassSplit],
    herd: &[Instance],
) -> Result<EvalResult> {
    check_split(split, classes, herd)?;
    let head = model
        .head
        .as_ref()
        .ok_or_else(|| Error::Evaluation("closed-set baseline needs a classification head".into()))?;
    if head.identities.iter().any(|id| !split.known.contains(id)) {
        return Err(Error::Evaluation("head classes are not the split's known set".into()));
    }
    let mut records = Vec::new();
    for c in classes {
        for &i in &c.test {
            let e = model.net.forward(&herd[i])?;
            records.push(QueryRecord {
                instance_id: i,
                true_label: c.identity_id,
                predicted: Some(head.predict(&e)),
                known: split.known.contains(&c.identity_id),
            });
        }
    }
    Ok(EvalResult::from_records(split, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub train: TrainConfig,
    pub ratios: Vec<f64>,
    pub reps: usize,
    pub loss_kinds: Vec<LossKind>,
    pub master_seed: u64,
    pub max_distance: Option<f64>,
}

/// One trained-and-evaluated `(loss, ratio, repetition)` cell.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub loss_kind: LossKind,
    pub result: EvalResult,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub loss_kind: LossKind,
    pub ratio: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub reps: usize,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SummaryRow>,
}

/// Train and evaluate one model. The closed-set baseline (`softmax`) is scored
/// through its head; every other loss through open-set kNN.
pub fn train_and_evaluate(
    herd: &[Instance],
    split: &OpenSetSplit,
    classes: &[ClassSplit],
    kind: LossKind,
    config: &TrainConfig,
    max_distance: Option<f64>,
) -> Result<(crate::embednet::TrainOutcome, EvalResult)> {
    let outcome = train(herd, split, classes, kind, config)?;
    let result = if kind == LossKind::Softmax {
        closed_set_baseline(&outcome.model, split, classes, herd)?
    } else {
        evaluate_split(&outcome.model, split, classes, herd, config.knn_k, max_distance)?
    };
    Ok((outcome, result))
}

/// Seed used to initialise and batch the model of one `(ratio, repetition)`
/// cell; shared by every loss kind so they start from the same weights.
pub fn run_seed(master_seed: u64, ratio: f64, repetition: usize) -> u64 {
    let ratio_key = (ratio * 1e6).round() as u64;
    derive_seed(master_seed, &[0x7275_6e73, ratio_key, repetition as u64])
}

/// Generate the splits for `config` and run the sweep over them.
pub fn openness_sweep(herd: &[Instance], config: &SweepConfig) -> Result<SweepTable> {
    let splits = make_openset_splits(
        &identities(herd),
        &config.ratios,
        config.reps,
        config.master_seed,
    )?;
    let classes = make_class_splits(herd, config.master_seed)?;
    sweep_splits(herd, &classes, &splits, config)
}

/// Train and evaluate every `(loss, split)` pair. Runs fan out over the rayon
/// pool; results come back in `(loss, split)` order whatever the scheduling.
pub fn sweep_splits(
    herd: &[Instance],
    classes: &[ClassSplit],
    splits: &[OpenSetSplit],
    config: &SweepConfig,
) -> Result<SweepTable> {
    if config.loss_kinds.is_empty() || splits.is_empty() {
        return Err(Error::Config("sweep needs at least one loss kind and one split".into()));
    }
    let mut jobs = Vec::new();
    for &kind in &config.loss_kinds {
        for split in splits {
            jobs.push((kind, split));
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(kind, split)| {
            let mut train_cfg = config.train.clone();
            train_cfg.seed = run_seed(
                config.master_seed,
                split.openness_ratio,
                split.repetition_index,
            );
            let (outcome, result) =
                train_and_evaluate(herd, split, classes, kind, &train_cfg, config.max_distance)?;
            Ok(SweepRun {
                loss_kind: kind,
                result,
                best_epoch: outcome.best_epoch,
                log: outcome.log,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs);
    Ok(SweepTable { runs, summary })
}

/// Mean, min and max accuracy per `(loss, ratio)`, in first-seen order.
pub fn summarize(runs: &[SweepRun]) -> Vec<SummaryRow> {
    let mut rows: Vec<(LossKind, f64, Vec<f64>)> = Vec::new();
    for r in runs {
        match rows
            .iter_mut()
            .find(|(k, ratio, _)| *k == r.loss_kind && *ratio == r.result.ratio)
        {
            Some(row) => row.2.push(r.result.accuracy),
            None => rows.push((r.loss_kind, r.result.ratio, vec![r.result.accuracy])),
        }
    }
    rows.into_iter()
        .map(|(loss_kind, ratio, accs)| SummaryRow {
            loss_kind,
            ratio,
            mean: accs.iter().sum::<f64>() / accs.len() as f64,
            min: accs.iter().copied().fold(f64::INFINITY, f64::min),
            max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            reps: accs.len(),
        })
        .collect()
}

pub fn results_csv(runs: &[SweepRun]) -> String {
    let mut out =
        String::from("loss_kind,ratio,repetition,accuracy,err_known_frac,err_unknown_frac\n");
    for r in runs {
        out.push_str(&format!(
            "{},{:.2},{},{:.6},{:.6},{:.6}\n",
            r.loss_kind,
            r.result.ratio,
            r.result.repetition,
            r.result.accuracy,
            r.result.error_known_fraction,
            r.result.error_unknown_fraction
        ));
    }
    out
}

/// One row per `(loss, ratio)`; `cell` carries the `mean:[min,max]` percentage layout.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("loss_kind,ratio,reps,mean,min,max,cell\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.2},{},{:.6},{:.6},{:.6},{:.2}:[{:.2},{:.2}]\n",
            r.loss_kind,
            r.ratio,
            r.reps,
            r.mean,
            r.min,
            r.max,
            100.0 * r.mean,
            100.0 * r.min,
            100.0 * r.max
        ));
    }
    out
}

/// Parse a summary CSV written by [`summary_csv`].
pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Validation(format!("summary CSV line {}: {line:?}", n + 1));
        if f.len() < 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(SummaryRow {
            loss_kind: f[0].parse()?,
            ratio: num(f[1])?,
            reps: f[2].parse().map_err(|_| bad())?,
            mean: num(f[3])?,
            min: num(f[4])?,
            max: num(f[5])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coatgen::{Grid, SourceTag};
    use crate::linalg::Rng;
    use proptest::prelude::*;

    fn gallery_2d() -> Gallery {
        let mut g = Gallery::default();
        for p in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]] {
            g.push(p.to_vec(), 1, Membership::Train);
        }
        for p in [[10.0, 10.0], [10.0, 11.0]] {
            g.push(p.to_vec(), 2, Membership::Train);
        }
        g
    }

    #[test]
    fn knn_examples() {
        let g = gallery_2d();
        assert_eq!(knn_classify(&g, &[10.0, 11.0], 1).unwrap(), 2);
        assert_eq!(knn_classify(&g, &[0.4, 0.4], 5).unwrap(), 1);
        let mut one = Gallery::default();
        one.push(vec![3.0, 3.0], 9, Membership::Val);
        one.push(vec![-3.0, 3.0], 9, Membership::Train);
        for k in 1..4 {
            assert_eq!(knn_classify(&one, &[100.0, -7.0], k).unwrap(), 9);
        }
        assert!(knn_classify(&Gallery::default(), &[0.0], 1).is_err());
    }

    #[test]
    fn knn_vote_ties_use_summed_distance_then_label() {
        let mut g = Gallery::default();
        g.push(vec![1.0], 5, Membership::Train);
        g.push(vec![-2.0], 3, Membership::Train);
        // One vote each: label 5 is closer.
        assert_eq!(knn_classify(&g, &[0.0], 2).unwrap(), 5);
        let mut h = Gallery::default();
        h.push(vec![1.0], 5, Membership::Train);
        h.push(vec![-1.0], 3, Membership::Train);
        // Same votes, same distance: smaller label.
        assert_eq!(knn_classify(&h, &[0.0], 2).unwrap(), 3);
    }

    #[test]
    fn rejection_flag() {
        let g = gallery_2d();
        assert_eq!(knn_classify_with_rejection(&g, &[50.0, 50.0], 5, Some(5.0)).unwrap(), None);
        assert_eq!(knn_classify_with_rejection(&g, &[0.0, 0.1], 5, Some(5.0)).unwrap(), Some(1));
    }

    proptest! {
        #[test]
        fn knn_ignores_gallery_order(seed in 0u64..5000, k in 1usize..8) {
            let mut rng = Rng::new(seed);
            let mut g = Gallery::default();
            for _ in 0..12 {
                // Coarse lattice so distance ties actually happen.
                let p = vec![rng.below(4) as f64, rng.below(4) as f64];
                g.push(p, rng.below(3) as u32, Membership::Train);
            }
            let q = vec![rng.below(4) as f64, rng.below(4) as f64];
            let base = knn_classify(&g, &q, k).unwrap();
            let mut order: Vec<usize> = (0..g.len()).collect();
            rng.shuffle(&mut order);
            let mut h = Gallery::default();
            for &i in &order {
                h.push(g.embeddings[i].clone(), g.labels[i], g.membership[i]);
            }
            prop_assert_eq!(knn_classify(&h, &q, k).unwrap(), base);
        }
    }

    fn toy_herd(classes: u32, per: usize) -> (Vec<Instance>, Vec<ClassSplit>) {
        let mut herd = Vec::new();
        for id in 0..classes {
            for _ in 0..per {
                herd.push(Instance {
                    instance_id: herd.len(),
                    grid: Grid::filled(2, 2, 0.0),
                    identity_id: id,
                    source_tag: SourceTag::round_robin(id),
                    pattern_seed: 0,
                    augmentation_seed: 0,
                });
            }
        }
        let classes = make_class_splits(&herd, 1).unwrap();
        (herd, classes)
    }

    struct OneHot(usize);
    impl Embedder for OneHot {
        fn embed(&self, inst: &Instance) -> Result<Vec<f64>> {
            let mut v = vec![0.0; self.0];
            v[inst.identity_id as usize] = 1.0;
            Ok(v)
        }
    }

    struct Noise;
    impl Embedder for Noise {
        fn embed(&self, inst: &Instance) -> Result<Vec<f64>> {
            let mut rng = Rng::new(derive_seed(0xfeed, &[inst.instance_id as u64]));
            Ok((0..16).map(|_| rng.normal()).collect())
        }
    }

    #[test]
    fn oracle_embedder_is_perfect() {
        let (herd, classes) = toy_herd(6, 20);
        let split = &make_openset_splits(&identities(&herd), &[0.5], 1, 2).unwrap()[0];
        let r = evaluate_split(&OneHot(6), split, &classes, &herd, 5, None).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.error_known_fraction, r.error_unknown_fraction), (0.0, 0.0));
        assert_eq!(r.records.len(), 60);
        assert_eq!(r.known_query_fraction(), 0.5);
    }

    #[test]
    fn random_embedder_is_at_chance() {
        let c = 8u32;
        let (herd, classes) = toy_herd(c, 40);
        let split = &make_openset_splits(&identities(&herd), &[0.5], 1, 2).unwrap()[0];
        let r = evaluate_split(&Noise, split, &classes, &herd, 5, None).unwrap();
        // Binomial(n = 80 queries, p = 1/8): 3 sigma band.
        let n = r.records.len() as f64;
        let p = 1.0 / c as f64;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((r.accuracy - p).abs() <= 3.0 * sigma, "accuracy {}", r.accuracy);
        assert!((r.error_known_fraction + r.error_unknown_fraction - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn mismatched_split_is_rejected() {
        let (herd, classes) = toy_herd(4, 20);
        let split = OpenSetSplit::closed([0, 1, 2]);
        assert!(matches!(
            evaluate_split(&OneHot(4), &split, &classes, &herd, 5, None),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn summary_csv_round_trip_and_layout() {
        let rows = vec![SummaryRow {
            loss_kind: LossKind::SoftmaxReciprocalTriplet,
            ratio: 0.5,
            mean: 0.9375,
            min: 0.9024,
            max: 0.9566,
            reps: 10,
        }];
        let text = summary_csv(&rows);
        assert!(text.contains("softmax-rtl,0.50,10,0.937500,0.902400,0.956600,93.75:[90.24,95.66]"));
        assert_eq!(parse_summary_csv(&text).unwrap(), rows);
    }
}
