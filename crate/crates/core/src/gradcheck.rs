//! Central-difference check of [`backward`] on small random networks.
//!
//! A coordinate is compared only when the piecewise-linear regime (ReLU
//! masks, batch-hard selections, active hinges) is the same at `theta - h`,
//! `theta` and `theta + h`; otherwise the difference quotient straddles a
//! kink and says nothing about the gradient.

use crate::coatgen::Grid;
use crate::embednet::{backward, ClassHead, EmbedNet, Model, NetConfig};
use crate::error::Result;
use crate::linalg::{dist, Rng};
use crate::losses::{LossConfig, LossKind};
use crate::mining::{batch_hard_loss, TripletBatch};

pub const STEP: f64 = 1e-5;
/// Gradients below this fraction of `max(1, |loss|)` are compared
/// absolutely: a central difference at `STEP` cannot resolve them from
/// rounding in the loss itself.
pub const RELATIVE_FLOOR: f64 = 1e-5;
/// Minimum distance from a hinge or from `d(a, n) = 0`.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct KindReport {
    pub kind: LossKind,
    pub configurations: usize,
    pub coordinates: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub per_kind: Vec<KindReport>,
    /// Coordinates dropped because a step crossed a kink.
    pub skipped_coordinates: usize,
}

impl GradCheckReport {
    pub fn configurations(&self) -> usize {
        self.per_kind.iter().map(|k| k.configurations).sum()
    }

    pub fn max_relative_error(&self) -> f64 {
        self.per_kind
            .iter()
            .map(|k| k.max_relative_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = RELATIVE_FLOOR * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// One random problem: network, optional head, batch and loss settings.
pub struct Problem {
    pub model: Model,
    pub inputs: Vec<Grid>,
    pub labels: Vec<u32>,
    pub kind: LossKind,
    pub loss: LossConfig,
}

impl Problem {
    /// Small net (widths 2-2-2, 8-d embedding) on a 3 x 2 batch of 12 x 12 grids.
    pub fn random(kind: LossKind, rng: &mut Rng) -> Self {
        let config = NetConfig {
            input_size: 12,
            widths: [2, 2, 2],
            pool: 1 + rng.below(2),
            embedding_dim: 8,
        };
        let mut net = EmbedNet::init(config, rng);
        for t in net.params.iter_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.7 * rng.normal());
        }
        let (p, k) = (3usize, 2usize);
        let ids: Vec<u32> = (0..p as u32).map(|c| 10 + 3 * c).collect();
        let head = kind.uses_softmax().then(|| {
            let mut h = ClassHead::init(8, ids.clone(), rng);
            h.bias.data.iter_mut().for_each(|v| *v = 0.3 * rng.normal());
            h
        });
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for &id in &ids {
            for _ in 0..k {
                let mut g = Grid::filled(12, 12, 0.0);
                g.data.iter_mut().for_each(|v| *v = rng.next_f64());
                inputs.push(g);
                labels.push(id);
            }
        }
        let loss = LossConfig {
            margin: rng.uniform(0.2, 2.0),
            lambda: if rng.below(2) == 0 { 0.01 } else { 0.5 },
            ..LossConfig::default()
        };
        Self {
            model: Model { net, head },
            inputs,
            labels,
            kind,
            loss,
        }
    }

    fn loss_value(&self) -> Result<f64> {
        let refs: Vec<&Grid> = self.inputs.iter().collect();
        Ok(backward(&self.model, &refs, &self.labels, self.kind, &self.loss)?.0.total)
    }

    fn embeddings_and_masks(&self) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
        let mut embeddings = Vec::with_capacity(self.inputs.len());
        let mut masks = Vec::new();
        for g in &self.inputs {
            let act = self.model.net.forward_cached(g)?;
            for map in &act.maps[1..] {
                masks.extend(map.iter().map(|&v| v > 0.0));
            }
            embeddings.push(act.embedding);
        }
        Ok((embeddings, masks))
    }

    /// Everything that selects a linear piece of the objective.
    fn regime(&self) -> Result<Vec<bool>> {
        let (embeddings, mut key) = self.embeddings_and_masks()?;
        if let Some(base) = self.kind.metric_base() {
            let batch = TripletBatch::new(embeddings, self.labels.clone())?;
            let out = batch_hard_loss(&batch, &self.loss, base)?;
            for (s, l) in out.selections.iter().zip(&out.anchor_losses) {
                key.extend((0..usize::BITS).map(|b| s.positive >> b & 1 == 1));
                key.extend((0..usize::BITS).map(|b| s.negative >> b & 1 == 1));
                key.push(*l > 0.0);
            }
        } else if self.kind == LossKind::Contrastive {
            for i in 0..embeddings.len() {
                for j in i + 1..embeddings.len() {
                    if self.labels[i] != self.labels[j] {
                        key.push(dist(&embeddings[i], &embeddings[j]) < self.loss.margin);
                    }
                }
            }
        }
        Ok(key)
    }

    /// True when the objective sits clear of every hinge and of `d = 0`.
    pub fn clear_of_kinks(&self) -> Result<bool> {
        let (embeddings, _) = self.embeddings_and_masks()?;
        let n = embeddings.len();
        for i in 0..n {
            for j in i + 1..n {
                let d = dist(&embeddings[i], &embeddings[j]);
                if d < KINK_MARGIN {
                    return Ok(false);
                }
                let dissimilar = self.labels[i] != self.labels[j];
                if self.kind == LossKind::Contrastive
                    && dissimilar
                    && (d - self.loss.margin).abs() < KINK_MARGIN
                {
                    return Ok(false);
                }
            }
        }
        if self.kind.metric_base().is_some() {
            let batch = TripletBatch::new(embeddings.clone(), self.labels.clone())?;
            let out = batch_hard_loss(&batch, &self.loss, crate::losses::MetricBase::Triplet)?;
            for (a, s) in out.selections.iter().enumerate() {
                let dap = dist(&embeddings[a], &embeddings[s.positive]);
                let dan = dist(&embeddings[a], &embeddings[s.negative]);
                if (dap - dan + self.loss.margin).abs() < KINK_MARGIN {
                    return Ok(false);
                }
                // A near-tie between candidates flips the selection under tiny steps.
                for (b, e) in embeddings.iter().enumerate() {
                    if b == a || b == s.positive || b == s.negative {
                        continue;
                    }
                    let d = dist(&embeddings[a], e);
                    let same = self.labels[b] == self.labels[a];
                    if same && (d - dap).abs() < KINK_MARGIN || !same && (d - dan).abs() < KINK_MARGIN {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Largest relative error over every parameter, and the number of
    /// coordinates compared and skipped.
    pub fn check(&mut self) -> Result<(f64, usize, usize)> {
        let refs: Vec<&Grid> = self.inputs.iter().collect();
        let (value, grads) = backward(&self.model, &refs, &self.labels, self.kind, &self.loss)?;
        let base = self.regime()?;
        let mut worst = 0.0f64;
        let (mut compared, mut skipped) = (0, 0);
        let n_tensors = grads.len();
        for t in 0..n_tensors {
            for i in 0..grads[t].data.len() {
                let original = self.param(t, i);
                self.set_param(t, i, original + STEP);
                let plus = self.loss_value()?;
                let plus_regime = self.regime()?;
                self.set_param(t, i, original - STEP);
                let minus = self.loss_value()?;
                let minus_regime = self.regime()?;
                self.set_param(t, i, original);
                if plus_regime != base || minus_regime != base {
                    skipped += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * STEP);
                worst = worst.max(relative_error(grads[t].data[i], numeric, value.total));
                compared += 1;
            }
        }
        Ok((worst, compared, skipped))
    }

    fn param(&self, t: usize, i: usize) -> f64 {
        self.model.tensors()[t].data[i]
    }

    fn set_param(&mut self, t: usize, i: usize, v: f64) {
        self.model.tensors_mut()[t].data[i] = v;
    }
}

/// Check `per_kind` random problems for every loss kind.
pub fn gradient_check(seed: u64, per_kind: usize) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let mut report = GradCheckReport {
        per_kind: Vec::new(),
        skipped_coordinates: 0,
    };
    for &kind in &LossKind::ALL {
        let mut kr = KindReport {
            kind,
            configurations: 0,
            coordinates: 0,
            max_relative_error: 0.0,
        };
        while kr.configurations < per_kind {
            let mut problem = Problem::random(kind, &mut rng);
            if !problem.clear_of_kinks()? {
                continue;
            }
            let (worst, compared, skipped) = problem.check()?;
            kr.configurations += 1;
            kr.coordinates += compared;
            kr.max_relative_error = kr.max_relative_error.max(worst);
            report.skipped_coordinates += skipped;
        }
        report.per_kind.push(kr);
    }
    Ok(report)
}
