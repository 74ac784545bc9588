//! Comparison methods: logistic regression and a linear SVM over
//! hand-crafted features, and a graph classifier that orders vertices by BFS
//! receptive fields and applies 1-D convolutions.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{glorot_with, Activation, Scalar, Tape, Tensor, Var};
use crate::data::SampledInstance;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::feats::{assemble_vertex_features, ego_features, VertexFeatureTable, VERTEX_FEATURE_DIM};
use crate::graph::Graph;
use crate::model::{fit, FitConfig, Split, TrainHistory, TrainableModel};
use crate::seeds;

/// Width of the hand-crafted feature block: 7 ego vertex features,
/// 64-dimensional ego embedding, 4 ego-network features.
pub fn baseline_feature_dim(embed_dim: usize) -> usize {
    VERTEX_FEATURE_DIM + embed_dim + 4
}

/// Assemble the raw (un-standardized) baseline feature rows: per instance
/// `[ego vertex features (7) || ego embedding || ego-network features (4)]`.
pub fn build_baseline_features(
    instances: &[SampledInstance],
    table: &VertexFeatureTable,
    emb: &EmbeddingMatrix,
    g: &Graph,
) -> Result<(Tensor<f64>, Vec<bool>)> {
    let dim = baseline_feature_dim(emb.dim());
    let mut rows = Tensor::zeros(instances.len(), dim);
    let mut labels = Vec::with_capacity(instances.len());
    for (r, inst) in instances.iter().enumerate() {
        let vertex_block = assemble_vertex_features(table, inst)?;
        let ego_local = inst.ego_local;
        let ego_row = &vertex_block
            [ego_local * VERTEX_FEATURE_DIM..(ego_local + 1) * VERTEX_FEATURE_DIM];
        let ego_global = inst.ego_global();
        let ego_net = ego_features(inst, g)?;
        let out = rows.row_mut(r);
        out[..VERTEX_FEATURE_DIM].copy_from_slice(ego_row);
        out[VERTEX_FEATURE_DIM..VERTEX_FEATURE_DIM + emb.dim()]
            .copy_from_slice(emb.row(ego_global));
        out[VERTEX_FEATURE_DIM + emb.dim()..].copy_from_slice(&ego_net.as_block());
        labels.push(inst.label);
    }
    Ok((rows, labels))
}

/// Column standardization statistics fit on the training rows.
#[derive(Debug, Clone)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    pub fn fit(rows: &Tensor<f64>) -> Result<ColumnStats> {
        if rows.rows() == 0 {
            return Err(Error::EmptyDataset("no rows to fit column statistics".into()));
        }
        let (n, d) = rows.shape();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for i in 0..n {
            for (j, &v) in rows.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for i in 0..n {
            for (j, &v) in rows.row(i).iter().enumerate() {
                std[j] += (v - mean[j]).powi(2);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n as f64).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(ColumnStats { mean, std })
    }

    pub fn apply(&self, rows: &Tensor<f64>) -> Tensor<f64> {
        Tensor::from_fn(rows.rows(), rows.cols(), |i, j| {
            (rows.get(i, j) - self.mean[j]) / self.std[j]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearKind {
    Logistic,
    Hinge,
}

/// Linear scorer `w . x + b`. Logistic scores map through a sigmoid;
/// hinge scores are raw margins (a ranking for AUC, thresholded at 0).
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Ranking score: sigmoid probability for logistic, raw margin for hinge.
    pub fn score(&self, x: &[f64]) -> f64 {
        match self.kind {
            LinearKind::Logistic => 1.0 / (1.0 + (-self.margin(x)).exp()),
            LinearKind::Hinge => self.margin(x),
        }
    }

    /// Classification threshold matching [`LinearModel::score`]: probability
    /// 0.5 for logistic, margin 0 for hinge.
    pub fn threshold(&self) -> f64 {
        match self.kind {
            LinearKind::Logistic => 0.5,
            LinearKind::Hinge => 0.0,
        }
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// SGD on L2-regularized logistic or hinge loss; deterministic per seed.
pub fn linear_train(
    x: &Tensor<f64>,
    y: &[bool],
    kind: LinearKind,
    l2: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if n == 0 || y.len() != n {
        return Err(Error::EmptyDataset("linear_train needs aligned nonempty data".into()));
    }
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mut rng = seeds::rng(seed, "linear-train");
    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let xi = x.row(i);
            let z = w.iter().zip(xi.iter()).map(|(a, v)| a * v).sum::<f64>() + b;
            match kind {
                LinearKind::Logistic => {
                    let p = 1.0 / (1.0 + (-z).exp());
                    let g = p - f64::from(u8::from(y[i]));
                    for (wj, &vj) in w.iter_mut().zip(xi.iter()) {
                        *wj -= lr * (g * vj + l2 * *wj);
                    }
                    b -= lr * g;
                }
                LinearKind::Hinge => {
                    let ys = if y[i] { 1.0 } else { -1.0 };
                    if ys * z < 1.0 {
                        for (wj, &vj) in w.iter_mut().zip(xi.iter()) {
                            *wj -= lr * (-ys * vj + l2 * *wj);
                        }
                        b -= lr * (-ys);
                    } else {
                        for wj in w.iter_mut() {
                            *wj -= lr * l2 * *wj;
                        }
                    }
                }
            }
        }
    }
    Ok(LinearModel { kind, weights: w, bias: b })
}

/// Receptive-field construction and convolution sizes.
#[derive(Debug, Clone)]
pub struct PscnConfig {
    /// Selected vertices per instance.
    pub w: usize,
    /// Sequence slots per selected vertex (self first).
    pub k: usize,
    pub conv1_channels: usize,
    pub conv1_kernel: usize,
    pub conv1_stride: usize,
    pub conv2_channels: usize,
    pub conv2_kernel: usize,
    pub conv2_stride: usize,
}

impl Default for PscnConfig {
    fn default() -> Self {
        PscnConfig {
            w: 16,
            k: 5,
            conv1_channels: 16,
            conv1_kernel: 5,
            conv1_stride: 5,
            conv2_channels: 8,
            conv2_kernel: 1,
            conv2_stride: 1,
        }
    }
}

impl PscnConfig {
    pub fn sequence_len(&self) -> usize {
        self.w * self.k
    }

    fn conv1_positions(&self) -> usize {
        (self.sequence_len() - self.conv1_kernel) / self.conv1_stride + 1
    }

    fn conv2_positions(&self) -> usize {
        (self.conv1_positions() - self.conv2_kernel) / self.conv2_stride + 1
    }

    pub fn dense_input(&self) -> usize {
        self.conv2_positions() * self.conv2_channels
    }
}

/// BFS rank from the ego: depth first, then active before inactive, then
/// lower local index. Unreachable vertices get no rank.
fn bfs_ranking(instance: &SampledInstance) -> Vec<usize> {
    let local = &instance.local_graph;
    let mut visited = vec![false; local.vertex_count()];
    let mut ranking = Vec::new();
    let mut level = vec![instance.ego_local];
    visited[instance.ego_local] = true;
    while !level.is_empty() {
        ranking.extend(level.iter().copied());
        let mut next: Vec<usize> = Vec::new();
        for &v in &level {
            for &u in local.neighbors(v as u32) {
                let u = u as usize;
                if !visited[u] {
                    visited[u] = true;
                    next.push(u);
                }
            }
        }
        next.sort_by_key(|&u| (!instance.active[u], u));
        level = next;
    }
    ranking
}

/// Ordered feature sequence of shape `(w * k) x F`: the first `w` vertices in
/// BFS rank order, each contributing itself followed by its top-(k-1)
/// neighbors under the same ranking; short slots are zero rows.
pub fn pscn_receptive_fields(
    instance: &SampledInstance,
    cfg: &PscnConfig,
    input: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    if input.rows() != instance.size() {
        return Err(Error::Validation("input matrix rows must match instance size".into()));
    }
    let ranking = bfs_ranking(instance);
    let mut rank_of = vec![usize::MAX; instance.size()];
    for (r, &v) in ranking.iter().enumerate() {
        rank_of[v] = r;
    }
    let mut out = Tensor::zeros(cfg.sequence_len(), input.cols());
    for (slot, &v) in ranking.iter().take(cfg.w).enumerate() {
        let base = slot * cfg.k;
        out.row_mut(base).copy_from_slice(input.row(v));
        let mut nbrs: Vec<usize> = instance
            .local_graph
            .neighbors(v as u32)
            .iter()
            .map(|&u| u as usize)
            .collect();
        nbrs.sort_by_key(|&u| rank_of[u]);
        for (j, &u) in nbrs.iter().take(cfg.k - 1).enumerate() {
            out.row_mut(base + 1 + j).copy_from_slice(input.row(u));
        }
    }
    Ok(out)
}

/// Trained convolutional classifier parameters (flat tensor order:
/// conv1 w/b, conv2 w/b, dense w/b).
#[derive(Debug, Clone)]
pub struct PscnParams {
    pub tensors: Vec<Tensor<f32>>,
}

impl PscnParams {
    pub fn init(cfg: &PscnConfig, feature_dim: usize, seed: u64) -> PscnParams {
        let mut rng = seeds::rng(seed, "pscn-init");
        let in1 = cfg.conv1_kernel * feature_dim;
        let in2 = cfg.conv2_kernel * cfg.conv1_channels;
        let dense_in = cfg.dense_input();
        let tensors = vec![
            glorot_with(cfg.conv1_channels, in1, in1, cfg.conv1_channels, &mut rng),
            glorot_with(1, cfg.conv1_channels, in1, cfg.conv1_channels, &mut rng),
            glorot_with(cfg.conv2_channels, in2, in2, cfg.conv2_channels, &mut rng),
            glorot_with(1, cfg.conv2_channels, in2, cfg.conv2_channels, &mut rng),
            glorot_with(2, dense_in, dense_in, 2, &mut rng),
            glorot_with(1, 2, dense_in, 2, &mut rng),
        ];
        PscnParams { tensors }
    }

    pub fn names() -> [&'static str; 6] {
        ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "dense.w", "dense.b"]
    }

    pub fn decay_flags() -> Vec<bool> {
        vec![true, false, true, false, true, false]
    }
}

/// Forward pass: conv (unfold + affine + ELU) twice, flatten, dense 2-logit.
pub fn pscn_logits<F: Scalar>(
    tape: &mut Tape<F>,
    cfg: &PscnConfig,
    bound: &[Var],
    rf: &Tensor<F>,
) -> Result<Var> {
    if bound.len() != 6 {
        return Err(Error::Validation("pscn needs 6 parameter tensors".into()));
    }
    let x = tape.leaf(rf.clone(), false);
    let u1 = tape.unfold1d(x, cfg.conv1_kernel, cfg.conv1_stride)?;
    let z1 = tape.linear(u1, bound[0])?;
    let z1 = tape.add_row_vec(z1, bound[1])?;
    let h1 = Activation::Elu.apply(tape, z1);
    let u2 = tape.unfold1d(h1, cfg.conv2_kernel, cfg.conv2_stride)?;
    let z2 = tape.linear(u2, bound[2])?;
    let z2 = tape.add_row_vec(z2, bound[3])?;
    let h2 = Activation::Elu.apply(tape, z2);
    // flatten positions x channels into one row
    let flat = tape.unfold1d(h2, tape.value(h2).rows(), 1)?;
    let z3 = tape.linear(flat, bound[4])?;
    tape.add_row_vec(z3, bound[5])
}

struct PscnProblem<'a> {
    cfg: &'a PscnConfig,
    train: &'a [Tensor<f32>],
    train_labels: &'a [bool],
    valid: &'a [Tensor<f32>],
    valid_labels: &'a [bool],
    feature_dim: usize,
    seed: u64,
}

impl PscnProblem<'_> {
    fn rf(&self, split: Split, idx: usize) -> &Tensor<f32> {
        match split {
            Split::Train => &self.train[idx],
            Split::Valid => &self.valid[idx],
        }
    }
}

impl TrainableModel for PscnProblem<'_> {
    fn initial_params(&self) -> Vec<Tensor<f32>> {
        PscnParams::init(self.cfg, self.feature_dim, self.seed).tensors
    }

    fn decay_flags(&self) -> Vec<bool> {
        PscnParams::decay_flags()
    }

    fn len(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train.len(),
            Split::Valid => self.valid.len(),
        }
    }

    fn label(&self, split: Split, idx: usize) -> bool {
        match split {
            Split::Train => self.train_labels[idx],
            Split::Valid => self.valid_labels[idx],
        }
    }

    fn loss_on(
        &self,
        tape: &mut Tape<f32>,
        bound: &[Var],
        split: Split,
        idx: usize,
        _training: bool,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let logits = pscn_logits(tape, self.cfg, bound, self.rf(split, idx))?;
        let label = usize::from(self.label(split, idx));
        tape.nll_loss(logits, Rc::new(vec![label]))
    }

    fn score_with(&self, params: &[Tensor<f32>], split: Split, idx: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let bound: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let logits = pscn_logits(&mut tape, self.cfg, &bound, self.rf(split, idx))?;
        let row = tape.value(logits).row(0);
        let (z0, z1) = (f64::from(row[0]), f64::from(row[1]));
        let m = z0.max(z1);
        Ok(((z1 - m).exp()) / ((z0 - m).exp() + (z1 - m).exp()))
    }
}

/// Train the convolutional baseline with the shared Adagrad/early-stopping
/// harness over precomputed receptive-field matrices.
#[allow(clippy::too_many_arguments)]
pub fn pscn_train(
    cfg: &PscnConfig,
    train: &[Tensor<f32>],
    train_labels: &[bool],
    valid: &[Tensor<f32>],
    valid_labels: &[bool],
    fitcfg: &FitConfig,
) -> Result<(PscnParams, TrainHistory)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("pscn_train needs training instances".into()));
    }
    let feature_dim = train[0].cols();
    let problem = PscnProblem {
        cfg,
        train,
        train_labels,
        valid,
        valid_labels,
        feature_dim,
        seed: fitcfg.seed,
    };
    let result = fit(&problem, fitcfg)?;
    Ok((PscnParams { tensors: result.params }, result.history))
}

/// Inference positive-class probability for one receptive-field matrix.
pub fn pscn_score(cfg: &PscnConfig, params: &PscnParams, rf: &Tensor<f32>) -> Result<f64> {
    let mut tape = Tape::new();
    let bound: Vec<Var> = params
        .tensors
        .iter()
        .map(|t| tape.leaf(t.clone(), false))
        .collect();
    let logits = pscn_logits(&mut tape, cfg, &bound, rf)?;
    let row = tape.value(logits).row(0);
    let (z0, z1) = (f64::from(row[0]), f64::from(row[1]));
    let m = z0.max(z1);
    Ok(((z1 - m).exp()) / ((z0 - m).exp() + (z1 - m).exp()))
}

/// Feature dump: header, then one row per instance with the label last,
/// full-precision decimal text.
pub fn save_baseline_features<W: std::io::Write>(
    rows: &Tensor<f64>,
    labels: &[bool],
    mut out: W,
) -> Result<()> {
    write!(out, "# ")?;
    for j in 0..rows.cols() {
        write!(out, "f{j} ")?;
    }
    writeln!(out, "label")?;
    for (i, &label) in labels.iter().enumerate() {
        for &v in rows.row(i) {
            write!(out, "{v} ")?;
        }
        writeln!(out, "{}", u8::from(label))?;
    }
    Ok(())
}
