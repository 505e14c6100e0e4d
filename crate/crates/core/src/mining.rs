//! P x K mini-batches and online triplet mining.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{dist, euclidean_distance, Rng};
use crate::losses::{
    contrastive_from_distance, metric_from_distances, LossConfig, MetricBase, PairLabel,
};

/// Embedded mini-batch: `p` classes, each present exactly `k` times.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub p: usize,
    pub k: usize,
}

impl TripletBatch {
    /// Builds a batch and checks the P x K structure.
    pub fn new(embeddings: Vec<Vec<f64>>, labels: Vec<u32>) -> Result<Self> {
        if embeddings.len() != labels.len() || embeddings.is_empty() {
            return Err(Error::Mining(format!(
                "{} embeddings for {} labels",
                embeddings.len(),
                labels.len()
            )));
        }
        let dim = embeddings[0].len();
        if embeddings.iter().any(|e| e.len() != dim) {
            return Err(Error::Dimension("ragged batch embeddings".into()));
        }
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &l in &labels {
            *counts.entry(l).or_default() += 1;
        }
        let k = *counts.values().next().unwrap();
        if counts.values().any(|&c| c != k) {
            return Err(Error::Mining(format!(
                "classes appear unequally often: {counts:?}"
            )));
        }
        Ok(Self {
            embeddings,
            labels,
            p: counts.len(),
            k,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check_minable(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Mining("K = 1: no positive exists for any anchor".into()));
        }
        if self.p < 2 {
            return Err(Error::Mining("P = 1: no negative exists for any anchor".into()));
        }
        Ok(())
    }

    fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = dist(&self.embeddings[i], &self.embeddings[j]);
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        d
    }
}

/// Training instances per class, the population `sample_batch` draws from.
#[derive(Debug, Clone, Default)]
pub struct TrainPool {
    pub classes: Vec<(u32, Vec<usize>)>,
}

/// Instance indices of a sampled batch with their class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndices {
    pub indices: Vec<usize>,
    pub labels: Vec<u32>,
}

/// Uniformly choose `p` classes, then `k` instances from each, all without replacement.
pub fn sample_batch(pool: &TrainPool, p: usize, k: usize, rng: &mut Rng) -> Result<BatchIndices> {
    if p < 2 {
        return Err(Error::Sampling(format!("P = {p}: need at least 2 classes")));
    }
    if k < 1 {
        return Err(Error::Sampling("K must be at least 1".into()));
    }
    let eligible: Vec<&(u32, Vec<usize>)> =
        pool.classes.iter().filter(|(_, v)| v.len() >= k).collect();
    if eligible.len() < p {
        return Err(Error::Sampling(format!(
            "only {} classes have at least {k} training instances, need {p}",
            eligible.len()
        )));
    }
    let mut indices = Vec::with_capacity(p * k);
    let mut labels = Vec::with_capacity(p * k);
    for c in rng.sample_indices(eligible.len(), p) {
        let (label, members) = eligible[c];
        for m in rng.sample_indices(members.len(), k) {
            indices.push(members[m]);
            labels.push(*label);
        }
    }
    Ok(BatchIndices { indices, labels })
}

/// Per-anchor hardest positive and hardest negative batch positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchHardOutput {
    /// Sum over every batch member acting as anchor.
    pub loss: f64,
    pub selections: Vec<Selection>,
    pub anchor_losses: Vec<f64>,
}

fn hard_selections(batch: &TripletBatch, d: &[Vec<f64>]) -> Vec<Selection> {
    let n = batch.len();
    (0..n)
        .map(|a| {
            let mut pos: Option<usize> = None;
            let mut neg: Option<usize> = None;
            for j in 0..n {
                if j == a {
                    continue;
                }
                if batch.labels[j] == batch.labels[a] {
                    if pos.map_or(true, |p| d[a][j] > d[a][p]) {
                        pos = Some(j);
                    }
                } else if neg.map_or(true, |q| d[a][j] < d[a][q]) {
                    neg = Some(j);
                }
            }
            Selection {
                positive: pos.expect("K >= 2"),
                negative: neg.expect("P >= 2"),
            }
        })
        .collect()
}

/// Batch-hard loss: every member is an anchor once, paired with its farthest
/// same-class member and nearest other-class member. Ties go to the lowest index.
pub fn batch_hard_loss(
    batch: &TripletBatch,
    cfg: &LossConfig,
    base: MetricBase,
) -> Result<BatchHardOutput> {
    batch.check_minable()?;
    let d = batch.distance_matrix();
    let selections = hard_selections(batch, &d);
    let anchor_losses: Vec<f64> = selections
        .iter()
        .enumerate()
        .map(|(a, s)| metric_from_distances(base, d[a][s.positive], d[a][s.negative], cfg).0)
        .collect();
    Ok(BatchHardOutput {
        loss: anchor_losses.iter().sum(),
        selections,
        anchor_losses,
    })
}

/// Batch-hard loss and its gradient with respect to every embedding. The
/// selections are held fixed while differentiating.
pub fn batch_hard_loss_grad(
    batch: &TripletBatch,
    cfg: &LossConfig,
    base: MetricBase,
) -> Result<(BatchHardOutput, Vec<Vec<f64>>)> {
    let out = batch_hard_loss(batch, cfg, base)?;
    let dim = batch.embeddings[0].len();
    let mut grads = vec![vec![0.0; dim]; batch.len()];
    for (a, s) in out.selections.iter().enumerate() {
        let xa = &batch.embeddings[a];
        let xp = &batch.embeddings[s.positive];
        let xn = &batch.embeddings[s.negative];
        let d_ap = dist(xa, xp);
        let d_an = dist(xa, xn);
        let (_, g_ap, g_an) = metric_from_distances(base, d_ap, d_an, cfg);
        for t in 0..dim {
            if d_ap > 0.0 && g_ap != 0.0 {
                let u = (xa[t] - xp[t]) / d_ap * g_ap;
                grads[a][t] += u;
                grads[s.positive][t] -= u;
            }
            if d_an > 0.0 && g_an != 0.0 {
                let u = (xa[t] - xn[t]) / d_an * g_an;
                grads[a][t] += u;
                grads[s.negative][t] -= u;
            }
        }
    }
    Ok((out, grads))
}

/// Exhaustive reference for the batch-hard selections: recomputes every
/// anchor-candidate distance from the vectors, keeps strict improvements only.
pub fn brute_force_hard(batch: &TripletBatch) -> Result<Vec<Selection>> {
    batch.check_minable()?;
    let n = batch.len();
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut best_pos = (f64::NEG_INFINITY, usize::MAX);
        let mut best_neg = (f64::INFINITY, usize::MAX);
        for p in 0..n {
            if p == a || batch.labels[p] != batch.labels[a] {
                continue;
            }
            let d = euclidean_distance(&batch.embeddings[a], &batch.embeddings[p])?;
            if d > best_pos.0 {
                best_pos = (d, p);
            }
        }
        for q in 0..n {
            if batch.labels[q] == batch.labels[a] {
                continue;
            }
            let d = euclidean_distance(&batch.embeddings[a], &batch.embeddings[q])?;
            if d < best_neg.0 {
                best_neg = (d, q);
            }
        }
        out.push(Selection {
            positive: best_pos.1,
            negative: best_neg.1,
        });
    }
    Ok(out)
}

/// Mean loss over all valid `(a, p, n)` triplets whose loss is positive; zero
/// when no triplet is active.
pub fn batch_all_loss(batch: &TripletBatch, cfg: &LossConfig, base: MetricBase) -> Result<f64> {
    batch.check_minable()?;
    let d = batch.distance_matrix();
    let n = batch.len();
    let (mut total, mut active) = (0.0, 0usize);
    for a in 0..n {
        for p in 0..n {
            if p == a || batch.labels[p] != batch.labels[a] {
                continue;
            }
            for q in 0..n {
                if batch.labels[q] == batch.labels[a] {
                    continue;
                }
                let v = metric_from_distances(base, d[a][p], d[a][q], cfg).0;
                if v > 0.0 {
                    total += v;
                    active += 1;
                }
            }
        }
    }
    Ok(if active == 0 { 0.0 } else { total / active as f64 })
}

/// Mean contrastive loss over all unordered pairs of the batch, with gradients.
pub fn contrastive_pairs_loss_grad(
    embeddings: &[Vec<f64>],
    labels: &[u32],
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = embeddings.len();
    if n < 2 || labels.len() != n {
        return Err(Error::Mining("contrastive loss needs at least one pair".into()));
    }
    let dim = embeddings[0].len();
    let pairs = (n * (n - 1) / 2) as f64;
    let mut grads = vec![vec![0.0; dim]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let label = if labels[i] == labels[j] {
                PairLabel::Similar
            } else {
                PairLabel::Dissimilar
            };
            let d = dist(&embeddings[i], &embeddings[j]);
            let (v, dd) = contrastive_from_distance(d, label, cfg);
            total += v;
            if d > 0.0 && dd != 0.0 {
                for t in 0..dim {
                    let u = (embeddings[i][t] - embeddings[j][t]) / d * dd / pairs;
                    grads[i][t] += u;
                    grads[j][t] -= u;
                }
            }
        }
    }
    Ok((total / pairs, grads))
}
