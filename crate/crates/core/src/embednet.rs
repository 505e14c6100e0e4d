//! Convolutional embedding network with hand-written backpropagation.
//!
//! Architecture: three 3x3 convolutions with stride 2 and zero padding 1,
//! each followed by a ReLU, then a fully connected layer to the embedding.
//! Inputs are centred (`cell - 0.5`) before the first convolution. An
//! optional linear [`ClassHead`] on top of the embedding supplies logits for
//! the cross-entropy term and for the closed-set baseline.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coatgen::{Grid, Instance, INSTANCE_SIZE};
use crate::dataset::{ClassSplit, OpenSetSplit};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, dot, Rng};
use crate::losses::{softmax_ce_grad, LossConfig, LossKind};
use crate::mining::{
    batch_hard_loss_grad, contrastive_pairs_loss_grad, sample_batch, TrainPool, TripletBatch,
};
use crate::openset::{knn_classify, Embedder, Gallery, Membership};

pub const EMBEDDING_DIM: usize = 128;

/// Dense parameter block with an explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(&self.name, &self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_size: usize,
    pub widths: [usize; 3],
    /// Side of the average-pooling window applied to the last conv map
    /// before flattening; 1 flattens the map as is.
    pub pool: usize,
    pub embedding_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_size: INSTANCE_SIZE,
            widths: [8, 16, 32],
            pool: 2,
            embedding_dim: EMBEDDING_DIM,
        }
    }
}

fn conv_out(size: usize) -> usize {
    (size + 2 - 3) / 2 + 1
}

impl NetConfig {
    /// Spatial side after each stage.
    pub fn stage_sizes(&self) -> [usize; 4] {
        let s1 = conv_out(self.input_size);
        let s2 = conv_out(s1);
        let s3 = conv_out(s2);
        [self.input_size, s1, s2, s3]
    }

    pub fn pooled_size(&self) -> usize {
        self.stage_sizes()[3] / self.pool.max(1)
    }

    pub fn flat_features(&self) -> usize {
        let s = self.pooled_size();
        self.widths[2] * s * s
    }

    pub fn validate(&self) -> Result<()> {
        let s3 = self.stage_sizes()[3];
        if self.widths.contains(&0) || self.embedding_dim == 0 || self.input_size < 2 {
            return Err(Error::Config(format!("invalid network shape {self:?}")));
        }
        if self.pool == 0 || s3 % self.pool != 0 {
            return Err(Error::Config(format!(
                "pool window {} does not divide the final {s3}x{s3} map",
                self.pool
            )));
        }
        Ok(())
    }
}

/// Embedding network. Parameters are ordered
/// `conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, fc.w, fc.b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedNet {
    pub config: NetConfig,
    pub params: Vec<Tensor>,
}

/// Linear classifier over the embedding, one row per known identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHead {
    pub weight: Tensor,
    pub bias: Tensor,
    pub identities: Vec<u32>,
}

impl ClassHead {
    pub fn zeros(embedding_dim: usize, identities: Vec<u32>) -> Self {
        let c = identities.len();
        Self {
            weight: Tensor::zeros("head.w", &[c, embedding_dim]),
            bias: Tensor::zeros("head.b", &[c]),
            identities,
        }
    }

    pub fn init(embedding_dim: usize, identities: Vec<u32>, rng: &mut Rng) -> Self {
        let mut head = Self::zeros(embedding_dim, identities);
        let bound = (3.0 / embedding_dim as f64).sqrt();
        head.weight
            .data
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-bound, bound));
        head
    }

    pub fn num_classes(&self) -> usize {
        self.identities.len()
    }

    pub fn logits(&self, embedding: &[f64]) -> Vec<f64> {
        let dim = self.weight.shape[1];
        (0..self.num_classes())
            .map(|c| {
                let row = &self.weight.data[c * dim..(c + 1) * dim];
                self.bias.data[c] + row.iter().zip(embedding).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Identity of the arg-max logit; the lowest class index wins ties.
    pub fn predict(&self, embedding: &[f64]) -> u32 {
        let logits = self.logits(embedding);
        let mut best = 0;
        for (c, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = c;
            }
        }
        self.identities[best]
    }

    fn class_index(&self, identity: u32) -> Result<usize> {
        self.identities
            .iter()
            .position(|&i| i == identity)
            .ok_or_else(|| Error::Validation(format!("identity {identity} has no head row")))
    }
}

/// Network plus optional classification head; the unit that is trained and checkpointed.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: EmbedNet,
    pub head: Option<ClassHead>,
}

impl Model {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.net.params.iter().collect();
        if let Some(h) = &self.head {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.net.params.iter_mut().collect();
        if let Some(h) = &mut self.head {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

pub(crate) struct Activations {
    /// Centred input followed by the post-ReLU output of each conv stage.
    pub(crate) maps: Vec<Vec<f64>>,
    /// Patch matrix of each stage input, see [`im2col`].
    cols: Vec<Vec<f64>>,
    /// Pooled and flattened last map, the input of the linear layer.
    flat: Vec<f64>,
    pub(crate) embedding: Vec<f64>,
}

/// Patch matrix of a 3x3, stride-2, pad-1 convolution: row `(ic * 3 + ky) * 3 + kx`
/// holds that tap for every output pixel, zero where it falls in the padding.
fn im2col(input: &[f64], in_c: usize, size: usize) -> Vec<f64> {
    let out = conv_out(size);
    let n = out * out;
    let mut cols = vec![0.0; in_c * 9 * n];
    for ic in 0..in_c {
        let src = &input[ic * size * size..(ic + 1) * size * size];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ic * 3 + ky) * 3 + kx) * n..][..n];
                for oy in 0..out {
                    // Padded coordinates: the source pixel is (iy - 1, ix - 1).
                    let iy = 2 * oy + ky;
                    if iy == 0 || iy > size {
                        continue;
                    }
                    let srow = &src[(iy - 1) * size..iy * size];
                    for (ox, d) in row[oy * out..(oy + 1) * out].iter_mut().enumerate() {
                        let ix = 2 * ox + kx;
                        if ix >= 1 && ix <= size {
                            *d = srow[ix - 1];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch rows back onto the input grid.
fn col2im(cols: &[f64], in_c: usize, size: usize) -> Vec<f64> {
    let out = conv_out(size);
    let n = out * out;
    let mut grid = vec![0.0; in_c * size * size];
    for ic in 0..in_c {
        let dst = &mut grid[ic * size * size..(ic + 1) * size * size];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ic * 3 + ky) * 3 + kx) * n..][..n];
                for oy in 0..out {
                    let iy = 2 * oy + ky;
                    if iy == 0 || iy > size {
                        continue;
                    }
                    let drow = &mut dst[(iy - 1) * size..iy * size];
                    for (ox, &g) in row[oy * out..(oy + 1) * out].iter().enumerate() {
                        let ix = 2 * ox + kx;
                        if ix >= 1 && ix <= size {
                            drow[ix - 1] += g;
                        }
                    }
                }
            }
        }
    }
    grid
}

fn conv_forward_cols(cols: &[f64], weight: &[f64], bias: &[f64], out_c: usize) -> Vec<f64> {
    let taps = weight.len() / out_c;
    let n = cols.len() / taps;
    let mut output = vec![0.0; out_c * n];
    for (oc, plane) in output.chunks_exact_mut(n).enumerate() {
        plane.iter_mut().for_each(|v| *v = bias[oc]);
        for (r, &w) in weight[oc * taps..(oc + 1) * taps].iter().enumerate() {
            for (d, &c) in plane.iter_mut().zip(&cols[r * n..(r + 1) * n]) {
                *d += w * c;
            }
        }
    }
    output
}

#[cfg(test)]
fn conv_forward(
    input: &[f64],
    in_c: usize,
    size: usize,
    weight: &[f64],
    bias: &[f64],
    out_c: usize,
) -> Vec<f64> {
    conv_forward_cols(&im2col(input, in_c, size), weight, bias, out_c)
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    cols: &[f64],
    in_c: usize,
    size: usize,
    weight: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let taps = in_c * 9;
    let n = cols.len() / taps;
    let mut grad_cols = want_input_grad.then(|| vec![0.0; cols.len()]);
    for (oc, g_plane) in grad_out.chunks_exact(n).enumerate() {
        grad_b[oc] += g_plane.iter().sum::<f64>();
        for r in 0..taps {
            let widx = oc * taps + r;
            let col = &cols[r * n..(r + 1) * n];
            grad_w[widx] += dot(g_plane, col);
            if let Some(gc) = grad_cols.as_mut() {
                let w = weight[widx];
                for (d, &g) in gc[r * n..(r + 1) * n].iter_mut().zip(g_plane) {
                    *d += w * g;
                }
            }
        }
    }
    grad_cols.map(|gc| col2im(&gc, in_c, size))
}

/// Non-overlapping `window` x `window` average pooling of `channels` square maps.
fn avg_pool(input: &[f64], channels: usize, size: usize, window: usize) -> Vec<f64> {
    if window == 1 {
        return input.to_vec();
    }
    let out = size / window;
    let scale = 1.0 / (window * window) as f64;
    let mut pooled = vec![0.0; channels * out * out];
    for c in 0..channels {
        for y in 0..size {
            for x in 0..size {
                pooled[(c * out + y / window) * out + x / window] +=
                    scale * input[(c * size + y) * size + x];
            }
        }
    }
    pooled
}

fn avg_unpool(grad: &[f64], channels: usize, size: usize, window: usize) -> Vec<f64> {
    if window == 1 {
        return grad.to_vec();
    }
    let out = size / window;
    let scale = 1.0 / (window * window) as f64;
    let mut full = vec![0.0; channels * size * size];
    for c in 0..channels {
        for y in 0..size {
            for x in 0..size {
                full[(c * size + y) * size + x] =
                    scale * grad[(c * out + y / window) * out + x / window];
            }
        }
    }
    full
}

impl EmbedNet {
    /// All-zero parameters.
    pub fn zeros(config: NetConfig) -> Self {
        let [w1, w2, w3] = config.widths;
        let params = vec![
            Tensor::zeros("conv1.w", &[w1, 1, 3, 3]),
            Tensor::zeros("conv1.b", &[w1]),
            Tensor::zeros("conv2.w", &[w2, w1, 3, 3]),
            Tensor::zeros("conv2.b", &[w2]),
            Tensor::zeros("conv3.w", &[w3, w2, 3, 3]),
            Tensor::zeros("conv3.b", &[w3]),
            Tensor::zeros("fc.w", &[config.embedding_dim, config.flat_features()]),
            Tensor::zeros("fc.b", &[config.embedding_dim]),
        ];
        Self { config, params }
    }

    /// Fan-in scaled uniform weights (`sqrt(6/fan_in)` for convolutions feeding
    /// a ReLU, `sqrt(3/fan_in)` for the linear output), zero biases.
    pub fn init(config: NetConfig, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(config);
        for t in net.params.iter_mut().filter(|t| t.shape.len() > 1) {
            let fan_in: usize = t.shape[1..].iter().product();
            let gain = if t.name.starts_with("conv") { 6.0 } else { 3.0 };
            let bound = (gain / fan_in as f64).sqrt();
            t.data.iter_mut().for_each(|w| *w = rng.uniform(-bound, bound));
        }
        net
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, grid: &Grid) -> Result<()> {
        let s = self.config.input_size;
        if grid.width != s || grid.height != s {
            return Err(Error::Dimension(format!(
                "network expects {s}x{s} input, got {}x{}",
                grid.width, grid.height
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, grid: &Grid) -> Result<Activations> {
        self.check_input(grid)?;
        let sizes = self.config.stage_sizes();
        let channels = [1, self.config.widths[0], self.config.widths[1], self.config.widths[2]];
        let mut maps = Vec::with_capacity(4);
        let mut cols = Vec::with_capacity(3);
        maps.push(grid.data.iter().map(|v| v - 0.5).collect::<Vec<f64>>());
        for stage in 0..3 {
            cols.push(im2col(&maps[stage], channels[stage], sizes[stage]));
            let mut z = conv_forward_cols(
                &cols[stage],
                &self.params[2 * stage].data,
                &self.params[2 * stage + 1].data,
                channels[stage + 1],
            );
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            maps.push(z);
        }
        let flat = avg_pool(&maps[3], channels[3], sizes[3], self.config.pool);
        let fc_w = &self.params[6].data;
        let fc_b = &self.params[7].data;
        let n_in = flat.len();
        let embedding = (0..self.config.embedding_dim)
            .map(|o| {
                let row = &fc_w[o * n_in..(o + 1) * n_in];
                fc_b[o] + dot(row, &flat)
            })
            .collect();
        Ok(Activations {
            maps,
            cols,
            flat,
            embedding,
        })
    }

    /// Embedding of one grid.
    pub fn forward_grid(&self, grid: &Grid) -> Result<Vec<f64>> {
        Ok(self.forward_cached(grid)?.embedding)
    }

    pub fn forward(&self, instance: &Instance) -> Result<Vec<f64>> {
        self.forward_grid(&instance.grid)
    }

    /// Backpropagate `grad_embedding` through one cached forward pass,
    /// accumulating into `grads` (same order as `params`).
    fn backward_one(&self, act: &Activations, grad_embedding: &[f64], grads: &mut [Tensor]) {
        let sizes = self.config.stage_sizes();
        let channels = [1, self.config.widths[0], self.config.widths[1], self.config.widths[2]];
        let flat = &act.flat;
        let n_in = flat.len();
        let fc_w = &self.params[6].data;

        let mut grad_flat = vec![0.0; n_in];
        {
            let (head, tail) = grads.split_at_mut(7);
            let gw = &mut head[6].data;
            let gb = &mut tail[0].data;
            for (o, &g) in grad_embedding.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let row = &fc_w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += g * flat[i];
                    grad_flat[i] += g * row[i];
                }
            }
        }

        let mut grad = avg_unpool(&grad_flat, channels[3], sizes[3], self.config.pool);
        for stage in (0..3).rev() {
            // ReLU mask from the post-activation map.
            for (g, &a) in grad.iter_mut().zip(&act.maps[stage + 1]) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            let (lo, hi) = grads.split_at_mut(2 * stage + 1);
            let gw = &mut lo[2 * stage].data;
            let gb = &mut hi[0].data;
            let next = conv_backward(
                &act.cols[stage],
                channels[stage],
                sizes[stage],
                &self.params[2 * stage].data,
                &grad,
                gw,
                gb,
                stage > 0,
            );
            match next {
                Some(g) => grad = g,
                None => break,
            }
        }
    }
}

/// Terms of a batch objective; `metric` is unweighted, `total` includes lambda.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub softmax: f64,
    pub metric: f64,
}

/// Loss of a labelled batch under `kind` and the gradient of every parameter
/// of `model`, in [`Model::tensors`] order.
///
/// Softmax cross-entropy is averaged over the batch. The batch-hard metric
/// term is summed over anchors inside the combined kinds
/// (`softmax_mean + lambda * metric_sum`) and averaged over anchors when it is
/// the whole objective. Contrastive loss is the mean over pairs.
pub fn backward(
    model: &Model,
    inputs: &[&Grid],
    labels: &[u32],
    kind: LossKind,
    cfg: &LossConfig,
) -> Result<(BatchLoss, Vec<Tensor>)> {
    if inputs.len() != labels.len() || inputs.is_empty() {
        return Err(Error::Dimension(format!(
            "{} inputs for {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let b = inputs.len() as f64;
    let acts = inputs
        .iter()
        .map(|g| model.net.forward_cached(g))
        .collect::<Result<Vec<_>>>()?;
    let embeddings: Vec<Vec<f64>> = acts.iter().map(|a| a.embedding.clone()).collect();
    let dim = model.net.config.embedding_dim;
    let mut grad_emb = vec![vec![0.0; dim]; inputs.len()];

    let mut head_grads = model
        .head
        .as_ref()
        .map(|h| (h.weight.zeros_like(), h.bias.zeros_like()));

    let mut softmax_mean = 0.0;
    if kind.uses_softmax() {
        let head = model
            .head
            .as_ref()
            .ok_or_else(|| Error::Config(format!("loss {kind} needs a classification head")))?;
        let (gw, gbias) = head_grads.as_mut().expect("head present");
        for (i, x) in embeddings.iter().enumerate() {
            let class = head.class_index(labels[i])?;
            let (v, dlogits) = softmax_ce_grad(&head.logits(x), class)?;
            softmax_mean += v / b;
            for (c, &dl) in dlogits.iter().enumerate() {
                let g = dl / b;
                gbias.data[c] += g;
                let row = &head.weight.data[c * dim..(c + 1) * dim];
                let grow = &mut gw.data[c * dim..(c + 1) * dim];
                for t in 0..dim {
                    grow[t] += g * x[t];
                    grad_emb[i][t] += g * row[t];
                }
            }
        }
    }

    let metric_weight = if kind.uses_softmax() { cfg.lambda } else { 1.0 };
    let mut metric_term = 0.0;
    if kind == LossKind::Contrastive {
        let (v, g) = contrastive_pairs_loss_grad(&embeddings, labels, cfg)?;
        metric_term = v;
        for (acc, gi) in grad_emb.iter_mut().zip(g) {
            acc.iter_mut().zip(gi).for_each(|(a, x)| *a += x);
        }
    } else if let Some(base) = kind.metric_base() {
        let batch = TripletBatch::new(embeddings.clone(), labels.to_vec())?;
        let (out, g) = batch_hard_loss_grad(&batch, cfg, base)?;
        let scale = if kind.uses_softmax() { 1.0 } else { 1.0 / b };
        metric_term = out.loss * scale;
        for (acc, gi) in grad_emb.iter_mut().zip(g) {
            acc.iter_mut()
                .zip(gi)
                .for_each(|(a, x)| *a += metric_weight * x * scale);
        }
    }

    let total = if kind.uses_softmax() {
        softmax_mean + metric_weight * metric_term
    } else {
        metric_term
    };

    let mut grads: Vec<Tensor> = model.net.params.iter().map(Tensor::zeros_like).collect();
    for (act, g) in acts.iter().zip(&grad_emb) {
        model.net.backward_one(act, g, &mut grads);
    }
    if let Some((gw, gb)) = head_grads {
        grads.push(gw);
        grads.push(gb);
    }

    let finite = total.is_finite() && grads.iter().all(|t| t.data.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::TrainingInstability {
            epoch: 0,
            batch: 0,
            detail: format!("non-finite loss or gradient (loss = {total})"),
        });
    }
    Ok((
        BatchLoss {
            total,
            softmax: softmax_mean,
            metric: metric_term,
        },
        grads,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub momentum_enabled: bool,
    #[serde(skip)]
    pub velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64, momentum_enabled: bool) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            momentum_enabled,
            velocity: Vec::new(),
        }
    }
}

/// `v <- momentum * v + grad + weight_decay * param; param <- param - lr * v`.
/// Without momentum the step direction is `grad + weight_decay * param`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut SgdState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension(format!(
            "{} parameter tensors, {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        if p.shape != g.shape || v.len() != p.len() {
            return Err(Error::Dimension(format!("shape mismatch on {}", p.name)));
        }
        for ((w, &gi), vi) in p.data.iter_mut().zip(&g.data).zip(v.iter_mut()) {
            let step = gi + state.weight_decay * *w;
            *vi = if state.momentum_enabled {
                state.momentum * *vi + step
            } else {
                step
            };
            *w -= state.learning_rate * *vi;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_p: usize,
    pub batch_k: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub knn_k: usize,
    pub loss: LossConfig,
    pub net: NetConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_p: 8,
            batch_k: 2,
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 1e-4,
            knn_k: 5,
            loss: LossConfig::default(),
            net: NetConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate for `kind`. Kinds trained without momentum take
    /// `learning_rate / (1 - momentum)`, the steady-state step of the
    /// momentum update, so every kind moves at the same speed under a
    /// constant gradient.
    pub fn effective_learning_rate(&self, kind: LossKind) -> f64 {
        if kind.momentum_allowed() {
            self.learning_rate
        } else {
            self.learning_rate / (1.0 - self.momentum)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_p < 2 || self.batch_k < 2 {
            return Err(Error::Config("batches need P >= 2 and K >= 2".into()));
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.momentum)
            || self.weight_decay < 0.0
        {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        self.net.validate()?;
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PocketState {
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub best_parameters: Model,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Pocket weights: the snapshot with the best validation accuracy.
    pub model: Model,
    pub pocket_history: Vec<f64>,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub momentum_enabled: bool,
    /// Step size actually used; see [`TrainConfig::effective_learning_rate`].
    pub learning_rate: f64,
}

/// Known-class instance indices of one open-set split.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub known: Vec<u32>,
    pub pool: TrainPool,
    pub val: Vec<usize>,
}

impl TrainingData {
    pub fn new(split: &OpenSetSplit, classes: &[ClassSplit]) -> Result<Self> {
        let mut known: Vec<u32> = split.known.iter().copied().collect();
        known.sort_unstable();
        let mut pool = TrainPool::default();
        let mut val = Vec::new();
        for &id in &known {
            let cs = classes
                .iter()
                .find(|c| c.identity_id == id)
                .ok_or_else(|| Error::Validation(format!("no class split for identity {id}")))?;
            pool.classes.push((id, cs.train.clone()));
            val.extend(&cs.val);
        }
        Ok(Self { known, pool, val })
    }

    pub fn train_len(&self) -> usize {
        self.pool.classes.iter().map(|(_, v)| v.len()).sum()
    }
}

/// kNN accuracy of known validation instances against the known training gallery.
pub fn validation_accuracy(
    net: &EmbedNet,
    herd: &[Instance],
    data: &TrainingData,
    k: usize,
) -> Result<f64> {
    let mut gallery = Gallery::default();
    for (id, members) in &data.pool.classes {
        for &i in members {
            gallery.push(net.forward(&herd[i])?, *id, Membership::Train);
        }
    }
    if data.val.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for &i in &data.val {
        let e = net.forward(&herd[i])?;
        if knn_classify(&gallery, &e, k)? == herd[i].identity_id {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.val.len() as f64)
}

/// Fresh model for `kind`: a head is attached when the loss needs logits.
pub fn new_model(kind: LossKind, known: &[u32], config: &TrainConfig) -> Model {
    let mut rng = Rng::new(derive_seed(config.seed, &[0x696e_6974]));
    let net = EmbedNet::init(config.net.clone(), &mut rng);
    let head = kind
        .uses_softmax()
        .then(|| ClassHead::init(config.net.embedding_dim, known.to_vec(), &mut rng));
    Model { net, head }
}

/// Train on the known classes of `split` and keep the pocket weights.
///
/// One epoch is `ceil(train_instances / (P * K))` sampled batches, with
/// `P = min(batch_p, known classes)`. Momentum is disabled for the
/// reciprocal-triplet family.
pub fn train(
    herd: &[Instance],
    split: &OpenSetSplit,
    classes: &[ClassSplit],
    kind: LossKind,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let data = TrainingData::new(split, classes)?;
    if data.known.len() < 2 {
        return Err(Error::Config("training needs at least 2 known classes".into()));
    }
    let mut model = new_model(kind, &data.known, config);
    let momentum_enabled = kind.momentum_allowed();
    let learning_rate = config.effective_learning_rate(kind);
    let mut sgd = SgdState::new(
        learning_rate,
        config.momentum,
        config.weight_decay,
        momentum_enabled,
    );
    let p = config.batch_p.min(data.known.len());
    let k = config.batch_k;
    let batches = data.train_len().div_ceil(p * k).max(1);
    let mut rng = Rng::new(derive_seed(config.seed, &[0x6261_7463]));

    let mut pocket: Option<PocketState> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut log = Vec::with_capacity(config.epochs);
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        for batch_index in 0..batches {
            let picked = sample_batch(&data.pool, p, k, &mut rng)?;
            let inputs: Vec<&Grid> = picked.indices.iter().map(|&i| &herd[i].grid).collect();
            let (loss, grads) = backward(&model, &inputs, &picked.labels, kind, &config.loss)
                .map_err(|e| match e {
                    Error::TrainingInstability { detail, .. } => Error::TrainingInstability {
                        epoch,
                        batch: batch_index,
                        detail,
                    },
                    other => other,
                })?;
            loss_sum += loss.total;
            sgd_step(&mut model.tensors_mut(), &grads, &mut sgd)?;
        }
        let val_accuracy = validation_accuracy(&model.net, herd, &data, config.knn_k)?;
        if pocket
            .as_ref()
            .map_or(true, |p| val_accuracy >= p.best_val_accuracy)
        {
            pocket = Some(PocketState {
                best_val_accuracy: val_accuracy,
                best_epoch: epoch,
                best_parameters: model.clone(),
            });
        }
        history.push(pocket.as_ref().unwrap().best_val_accuracy);
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_accuracy,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let pocket = pocket.expect("at least one epoch");
    Ok(TrainOutcome {
        model: pocket.best_parameters,
        pocket_history: history,
        best_epoch: pocket.best_epoch,
        log,
        momentum_enabled,
        learning_rate,
    })
}

pub fn epoch_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy,wall_seconds\n");
    for row in log {
        out.push_str(&format!(
            "{},{:.9},{:.6},{:.3}\n",
            row.epoch, row.train_loss, row.val_accuracy, row.wall_seconds
        ));
    }
    out
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HMCKPT01";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    net: NetConfig,
    head_identities: Option<Vec<u32>>,
    tensors: Vec<Tensor>,
}

/// Checkpoint layout, all integers little-endian:
///
/// | offset | size | content |
/// |---|---|---|
/// | 0 | 8 | ASCII `HMCKPT01` |
/// | 8 | 8 | `u64` byte length `N` of the header |
/// | 16 | N | UTF-8 JSON `{"net":{..},"head_identities":[..]\|null,"tensors":[{"name","shape"}..]}` |
/// | 16+N | 8 x total | every tensor's values as `f64`, in header order |
pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let header = CheckpointHeader {
        net: model.net.config.clone(),
        head_identities: model.head.as_ref().map(|h| h.identities.clone()),
        tensors: model.tensors().into_iter().cloned().collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.tensors() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Model, String> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err("not a herdmetric checkpoint".into());
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_bytes = bytes
        .get(16..16 + header_len)
        .ok_or("truncated checkpoint header")?;
    let header: CheckpointHeader =
        serde_json::from_slice(header_bytes).map_err(|e| format!("checkpoint header: {e}"))?;
    let mut model = Model {
        net: EmbedNet::zeros(header.net.clone()),
        head: header
            .head_identities
            .map(|ids| ClassHead::zeros(header.net.embedding_dim, ids)),
    };
    let mut cursor = 16 + header_len;
    let expected = header.tensors;
    let mut slots = model.tensors_mut();
    if slots.len() != expected.len() {
        return Err(format!(
            "checkpoint lists {} tensors, model has {}",
            expected.len(),
            slots.len()
        ));
    }
    for (slot, meta) in slots.iter_mut().zip(&expected) {
        if slot.name != meta.name || slot.shape != meta.shape {
            return Err(format!(
                "tensor {} {:?} does not match {} {:?}",
                meta.name, meta.shape, slot.name, slot.shape
            ));
        }
        for v in slot.data.iter_mut() {
            let raw = bytes
                .get(cursor..cursor + 8)
                .ok_or("truncated checkpoint data")?;
            *v = f64::from_le_bytes(raw.try_into().unwrap());
            cursor += 8;
        }
    }
    if cursor != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - cursor));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_checkpoint(model))
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        column: 1,
        message,
    })
}

impl Embedder for EmbedNet {
    fn embed(&self, instance: &Instance) -> Result<Vec<f64>> {
        self.forward(instance)
    }
}

impl Embedder for Model {
    fn embed(&self, instance: &Instance) -> Result<Vec<f64>> {
        self.net.forward(instance)
    }
}
