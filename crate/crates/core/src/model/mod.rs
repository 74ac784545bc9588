//! Influence-prediction models over sampled ego networks: a stacked GCN
//! variant and a multi-head graph-attention variant sharing one input layer,
//! trainer, and checkpoint format.

pub mod checkpoint;
pub mod trainer;

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    attention_support, gcn_layer, gcn_norm_adjacency, glorot_with, instance_norm_value,
    multi_head, Activation, HeadMode, Scalar, Tape, Tensor, Var,
};
use crate::data::SampledInstance;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::feats::{assemble_vertex_features, VertexFeatureTable, VERTEX_FEATURE_DIM};
use crate::seeds;

pub use checkpoint::Checkpoint;
pub use trainer::{fit, FitConfig, FitResult, Split, TrainHistory, TrainableModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gcn,
    Gat,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Gcn => write!(f, "gcn"),
            Variant::Gat => write!(f, "gat"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "gcn" => Ok(Variant::Gcn),
            "gat" => Ok(Variant::Gat),
            other => Err(Error::Validation(format!("unknown variant '{other}'"))),
        }
    }
}

/// Model and training hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepInfConfig {
    pub variant: Variant,
    /// Total layer count including the 2-unit output layer.
    pub layers: usize,
    /// Hidden width of non-output layers (= heads * head width for GAT).
    pub hidden: usize,
    /// Attention heads per GAT layer.
    pub heads: usize,
    /// Sampled sub-network size.
    pub n: usize,
    pub restart: f64,
    pub embed_dim: usize,
    pub use_vertex_features: bool,
    pub use_instance_norm: bool,
    pub freeze_embeddings: bool,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub instance_norm_eps: f64,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for DeepInfConfig {
    fn default() -> Self {
        DeepInfConfig {
            variant: Variant::Gat,
            layers: 3,
            hidden: 128,
            heads: 8,
            n: 50,
            restart: 0.8,
            embed_dim: 64,
            use_vertex_features: true,
            use_instance_norm: true,
            freeze_embeddings: true,
            lr: 0.1,
            weight_decay: 5e-4,
            dropout: 0.2,
            batch: 1024,
            max_epochs: 500,
            patience: 20,
            instance_norm_eps: 1e-5,
            leaky_slope: 0.2,
            seed: 1,
        }
    }
}

impl DeepInfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Validation("at least two layers required".into()));
        }
        if self.variant == Variant::Gat {
            if self.heads == 0 || self.hidden % self.heads != 0 {
                return Err(Error::Validation(format!(
                    "hidden ({}) must be a positive multiple of heads ({})",
                    self.hidden, self.heads
                )));
            }
        } else if self.hidden == 0 {
            return Err(Error::Validation("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Hidden units per attention head.
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Width of the assembled input rows.
    pub fn input_dim(&self) -> usize {
        self.embed_dim + 2 + if self.use_vertex_features { VERTEX_FEATURE_DIM } else { 0 }
    }

    fn layer_widths(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.layers);
        let mut inw = self.input_dim();
        for l in 0..self.layers {
            let outw = if l + 1 == self.layers { 2 } else { self.hidden };
            widths.push((inw, outw));
            inw = outw;
        }
        widths
    }

    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Per-column standardization statistics fit on the training split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Moments of the assembled vertex features over all unpadded rows of
    /// the training instances. Zero-variance columns standardize to zero.
    pub fn fit(instances: &[SampledInstance], table: &VertexFeatureTable) -> Result<FeatureStats> {
        let d = VERTEX_FEATURE_DIM;
        let mut sum = vec![0.0f64; d];
        let mut sum_sq = vec![0.0f64; d];
        let mut count = 0usize;
        for inst in instances {
            let raw = assemble_vertex_features(table, inst)?;
            for i in 0..inst.real_count() {
                for j in 0..d {
                    let v = raw[i * d + j];
                    sum[j] += v;
                    sum_sq[j] += v * v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset("no rows to fit feature statistics".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let std: Vec<f64> = sum_sq
            .iter()
            .zip(mean.iter())
            .map(|(sq, m)| {
                let var = (sq / count as f64 - m * m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureStats { mean, std })
    }

    /// Z-scored per-instance feature matrix (n x 7), zero on padded rows.
    pub fn standardize<F: Scalar>(
        &self,
        instance: &SampledInstance,
        table: &VertexFeatureTable,
    ) -> Result<Tensor<F>> {
        let d = VERTEX_FEATURE_DIM;
        let raw = assemble_vertex_features(table, instance)?;
        let n = instance.size();
        let mut out = Tensor::zeros(n, d);
        for i in 0..instance.real_count() {
            for j in 0..d {
                let z = (raw[i * d + j] - self.mean[j]) / self.std[j];
                out.set(i, j, F::from_f64(z));
            }
        }
        Ok(out)
    }
}

/// One attention head's parameters: projection `w` (head_dim x in) and
/// attention vector `c` (2 * head_dim x 1).
#[derive(Debug, Clone)]
pub struct GatHeadParams<F> {
    pub w: Tensor<F>,
    pub c: Tensor<F>,
}

#[derive(Debug, Clone)]
pub enum LayerParams<F> {
    Gcn {
        w: Tensor<F>,
        b: Tensor<F>,
    },
    Gat {
        heads: Vec<GatHeadParams<F>>,
        b: Tensor<F>,
        /// Average instead of concatenating head outputs (output layer).
        average: bool,
    },
}

/// All layer parameters of a model instance.
#[derive(Debug, Clone)]
pub struct ModelParamsT<F> {
    pub layers: Vec<LayerParams<F>>,
}

pub type ModelParams = ModelParamsT<f32>;

impl<F: Scalar> ModelParamsT<F> {
    /// Glorot-initialized parameters for the configured architecture.
    pub fn init(config: &DeepInfConfig, seed: u64) -> Result<ModelParamsT<F>> {
        config.validate()?;
        let mut rng = seeds::rng(seed, "init");
        let mut layers = Vec::with_capacity(config.layers);
        for (l, (inw, outw)) in config.layer_widths().into_iter().enumerate() {
            let last = l + 1 == config.layers;
            match config.variant {
                Variant::Gcn => {
                    let w = glorot_with(outw, inw, inw, outw, &mut rng);
                    let b = glorot_with(1, outw, inw, outw, &mut rng);
                    layers.push(LayerParams::Gcn { w, b });
                }
                Variant::Gat => {
                    // hidden layers concatenate K heads of width hidden/K;
                    // the output layer averages K heads of width 2
                    let head_dim = if last { outw } else { config.head_dim() };
                    let heads = (0..config.heads)
                        .map(|_| GatHeadParams {
                            w: glorot_with(head_dim, inw, inw, head_dim, &mut rng),
                            c: glorot_with(2 * head_dim, 1, 2 * head_dim, 1, &mut rng),
                        })
                        .collect();
                    let b = glorot_with(1, outw, inw, outw, &mut rng);
                    layers.push(LayerParams::Gat { heads, b, average: last });
                }
            }
        }
        Ok(ModelParamsT { layers })
    }

    /// Flat tensor order: per layer, `w`/`b` for GCN or
    /// `head0.w, head0.c, ..., b` for GAT.
    pub fn flatten(&self) -> Vec<Tensor<F>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Gcn { w, b } => {
                    out.push(w.clone());
                    out.push(b.clone());
                }
                LayerParams::Gat { heads, b, .. } => {
                    for h in heads {
                        out.push(h.w.clone());
                        out.push(h.c.clone());
                    }
                    out.push(b.clone());
                }
            }
        }
        out
    }

    pub fn flat_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerParams::Gcn { .. } => 2,
                LayerParams::Gat { heads, .. } => 2 * heads.len() + 1,
            })
            .sum()
    }

    pub fn assign_flat(&mut self, flats: &[Tensor<F>]) -> Result<()> {
        if flats.len() < self.flat_len() {
            return Err(Error::Validation("flat parameter list too short".into()));
        }
        let mut it = flats.iter();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Gcn { w, b } => {
                    *w = it.next().unwrap().clone();
                    *b = it.next().unwrap().clone();
                }
                LayerParams::Gat { heads, b, .. } => {
                    for h in heads.iter_mut() {
                        h.w = it.next().unwrap().clone();
                        h.c = it.next().unwrap().clone();
                    }
                    *b = it.next().unwrap().clone();
                }
            }
        }
        Ok(())
    }

    pub fn flat_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Gcn { .. } => {
                    out.push(format!("layer{l}.w"));
                    out.push(format!("layer{l}.b"));
                }
                LayerParams::Gat { heads, .. } => {
                    for k in 0..heads.len() {
                        out.push(format!("layer{l}.head{k}.w"));
                        out.push(format!("layer{l}.head{k}.c"));
                    }
                    out.push(format!("layer{l}.b"));
                }
            }
        }
        out
    }

    /// Weight matrices decay; biases and attention vectors do not.
    pub fn flat_decay(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Gcn { .. } => {
                    out.push(true);
                    out.push(false);
                }
                LayerParams::Gat { heads, .. } => {
                    for _ in heads {
                        out.push(true);
                        out.push(false);
                    }
                    out.push(false);
                }
            }
        }
        out
    }
}

/// Everything the forward pass needs for one instance, precomputed once.
#[derive(Debug, Clone)]
pub struct PreparedT<F> {
    /// Full frozen input matrix (None when embeddings are trainable).
    pub input: Option<Tensor<F>>,
    /// Flag and feature columns (n x (2 [+7])), zero on padded rows.
    pub fixed_cols: Tensor<F>,
    /// Embedding row per local slot; padded slots hit the sentinel zero row.
    pub gather: Rc<Vec<usize>>,
    /// Negated pad mask.
    pub valid: Rc<Vec<bool>>,
    pub support: Option<Rc<Vec<Vec<usize>>>>,
    pub anorm: Option<Tensor<F>>,
    pub ego: usize,
    pub label: usize,
}

pub type Prepared = PreparedT<f32>;

/// Input-layer row assembly: instance-normalized embedding block, then the
/// active and ego indicator columns, then optional standardized vertex
/// features. Padded rows are all zero and exactly one row carries the ego
/// flag.
pub fn build_input_matrix<F: Scalar>(
    instance: &SampledInstance,
    emb: &Tensor<F>,
    feats: Option<&Tensor<F>>,
    use_instance_norm: bool,
    eps: f64,
) -> Result<Tensor<F>> {
    let n = instance.size();
    let d = emb.cols();
    let mut block = Tensor::zeros(n, d);
    for (i, &v) in instance.vertices.iter().enumerate() {
        if (v as usize) >= emb.rows() {
            return Err(Error::Validation(format!(
                "instance vertex {v} has no embedding row"
            )));
        }
        block.row_mut(i).copy_from_slice(emb.row(v as usize));
    }
    let valid: Vec<bool> = instance.pad_mask.iter().map(|&p| !p).collect();
    let block = if use_instance_norm {
        instance_norm_value(&block, &valid, F::from_f64(eps))?
    } else {
        block
    };
    let fixed = fixed_columns::<F>(instance, feats)?;
    let width = d + fixed.cols();
    let mut out = Tensor::zeros(n, width);
    for i in 0..instance.real_count() {
        out.row_mut(i)[..d].copy_from_slice(block.row(i));
        out.row_mut(i)[d..].copy_from_slice(fixed.row(i));
    }
    Ok(out)
}

/// The non-embedding input columns: `[active flag, ego flag, features...]`.
fn fixed_columns<F: Scalar>(
    instance: &SampledInstance,
    feats: Option<&Tensor<F>>,
) -> Result<Tensor<F>> {
    let n = instance.size();
    let fcols = feats.map_or(0, Tensor::cols);
    if let Some(f) = feats {
        if f.rows() != n || f.cols() != VERTEX_FEATURE_DIM {
            return Err(Error::Validation(format!(
                "feature matrix must be {n}x{VERTEX_FEATURE_DIM}, got {}x{}",
                f.rows(),
                f.cols()
            )));
        }
    }
    let mut out = Tensor::zeros(n, 2 + fcols);
    for i in 0..instance.real_count() {
        out.set(i, 0, if instance.active[i] { F::one() } else { F::zero() });
        out.set(i, 1, if i == instance.ego_local { F::one() } else { F::zero() });
        if let Some(f) = feats {
            out.row_mut(i)[2..].copy_from_slice(f.row(i));
        }
    }
    Ok(out)
}

/// Precompute the per-instance forward inputs for one model configuration.
pub fn prepare_instance<F: Scalar>(
    instance: &SampledInstance,
    emb: &Tensor<F>,
    feats: Option<&Tensor<F>>,
    config: &DeepInfConfig,
) -> Result<PreparedT<F>> {
    if instance.size() == 0 || instance.real_count() == 0 {
        return Err(Error::Validation("empty instance".into()));
    }
    let fixed_cols = fixed_columns::<F>(instance, feats)?;
    let input = if config.freeze_embeddings {
        Some(build_input_matrix(
            instance,
            emb,
            feats,
            config.use_instance_norm,
            config.instance_norm_eps,
        )?)
    } else {
        None
    };
    let sentinel = emb.rows();
    let gather: Vec<usize> = (0..instance.size())
        .map(|i| {
            instance
                .vertices
                .get(i)
                .map_or(sentinel, |&v| v as usize)
        })
        .collect();
    let valid: Vec<bool> = instance.pad_mask.iter().map(|&p| !p).collect();
    let (support, anorm) = match config.variant {
        Variant::Gat => (
            Some(attention_support(&instance.local_graph, &instance.pad_mask)),
            None,
        ),
        Variant::Gcn => (
            None,
            Some(gcn_norm_adjacency(&instance.local_graph, &instance.pad_mask)),
        ),
    };
    Ok(PreparedT {
        input,
        fixed_cols,
        gather: Rc::new(gather),
        valid: Rc::new(valid),
        support,
        anorm,
        ego: instance.ego_local,
        label: usize::from(instance.label),
    })
}

/// Layer parameters bound to a tape.
enum BoundLayer {
    Gcn { w: Var, b: Var },
    Gat { heads: Vec<(Var, Var)>, b: Var, average: bool },
}

/// Walk the flat var list in `flatten` order, mirroring the structure.
fn bind_structure<F: Scalar>(
    template: &ModelParamsT<F>,
    bound: &[Var],
) -> Result<(Vec<BoundLayer>, usize)> {
    let mut it = bound.iter().copied();
    let mut layers = Vec::with_capacity(template.layers.len());
    let mut used = 0usize;
    let mut next = |used: &mut usize| -> Result<Var> {
        *used += 1;
        it.next()
            .ok_or_else(|| Error::Validation("bound parameter list too short".into()))
    };
    for layer in &template.layers {
        match layer {
            LayerParams::Gcn { .. } => {
                let w = next(&mut used)?;
                let b = next(&mut used)?;
                layers.push(BoundLayer::Gcn { w, b });
            }
            LayerParams::Gat { heads, average, .. } => {
                let mut hv = Vec::with_capacity(heads.len());
                for _ in heads {
                    let w = next(&mut used)?;
                    let c = next(&mut used)?;
                    hv.push((w, c));
                }
                let b = next(&mut used)?;
                layers.push(BoundLayer::Gat { heads: hv, b, average: *average });
            }
        }
    }
    Ok((layers, used))
}

/// Per-layer, per-head attention artifacts captured during a forward pass.
pub struct AttentionCapture<F> {
    /// coefficients[layer][head] is the dense n x n coefficient matrix.
    pub coefficients: Vec<Vec<Tensor<F>>>,
    /// scores[layer][head][j] is the global ranking score of vertex j.
    pub scores: Vec<Vec<Vec<F>>>,
}

struct ForwardOutput<F> {
    ego_logits: Var,
    capture: Option<AttentionCapture<F>>,
}

#[allow(clippy::too_many_arguments)]
fn forward_instance<F: Scalar>(
    tape: &mut Tape<F>,
    config: &DeepInfConfig,
    template: &ModelParamsT<F>,
    bound: &[Var],
    prep: &PreparedT<F>,
    training: bool,
    rng: &mut ChaCha8Rng,
    capture_attention: bool,
) -> Result<ForwardOutput<F>> {
    let (layers, used) = bind_structure(template, bound)?;
    let emb_var = if config.freeze_embeddings {
        None
    } else {
        Some(*bound.get(used).ok_or_else(|| {
            Error::Validation("missing embedding parameter for unfrozen model".into())
        })?)
    };

    let mut h = match (&prep.input, emb_var) {
        (Some(input), None) => tape.leaf(input.clone(), false),
        (_, Some(emb)) => {
            let rows = tape.gather_rows(emb, Rc::clone(&prep.gather))?;
            let block = if config.use_instance_norm {
                tape.instance_norm(
                    rows,
                    Rc::clone(&prep.valid),
                    F::from_f64(config.instance_norm_eps),
                )?
            } else {
                rows
            };
            let fixed = tape.leaf(prep.fixed_cols.clone(), false);
            tape.concat_cols(&[block, fixed])?
        }
        (None, None) => {
            return Err(Error::Validation(
                "prepared instance lacks a frozen input matrix".into(),
            ))
        }
    };

    let anorm_var = prep.anorm.as_ref().map(|a| tape.leaf(a.clone(), false));
    let mut capture = capture_attention.then(|| AttentionCapture {
        coefficients: Vec::new(),
        scores: Vec::new(),
    });

    for (l, layer) in layers.iter().enumerate() {
        if training && config.dropout > 0.0 {
            h = tape.dropout(h, config.dropout, rng)?;
        }
        let activation = if l + 1 == config.layers {
            Activation::Identity
        } else {
            Activation::Elu
        };
        match layer {
            BoundLayer::Gcn { w, b } => {
                let anorm = anorm_var
                    .ok_or_else(|| Error::Validation("GCN forward needs Anorm".into()))?;
                h = gcn_layer(tape, h, anorm, *w, *b, activation)?;
            }
            BoundLayer::Gat { heads, b, average } => {
                let support = prep
                    .support
                    .as_ref()
                    .ok_or_else(|| Error::Validation("GAT forward needs support".into()))?;
                let mode = if *average { HeadMode::Average } else { HeadMode::Concat };
                let (out, head_artifacts) = multi_head(
                    tape,
                    h,
                    support,
                    heads,
                    *b,
                    mode,
                    activation,
                    config.leaky_slope,
                )?;
                if let Some(cap) = capture.as_mut() {
                    let mut coeffs = Vec::with_capacity(head_artifacts.len());
                    let mut scores = Vec::with_capacity(head_artifacts.len());
                    for art in &head_artifacts {
                        coeffs.push(tape.value(art.coefficients).clone());
                        scores.push(tape.value(art.scores).data().to_vec());
                    }
                    cap.coefficients.push(coeffs);
                    cap.scores.push(scores);
                }
                h = out;
            }
        }
    }

    let ego_logits = tape.row(h, prep.ego)?;
    Ok(ForwardOutput { ego_logits, capture })
}

/// Builds the per-instance loss used by the trainer and the gradient checks.
pub fn instance_loss<F: Scalar>(
    tape: &mut Tape<F>,
    config: &DeepInfConfig,
    template: &ModelParamsT<F>,
    bound: &[Var],
    prep: &PreparedT<F>,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let out = forward_instance(tape, config, template, bound, prep, training, rng, false)?;
    tape.nll_loss(out.ego_logits, Rc::new(vec![prep.label]))
}

fn softmax_prob1<F: Scalar>(logits: &[F]) -> f64 {
    let z0 = logits[0].into_f64();
    let z1 = logits[1].into_f64();
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    e1 / (e0 + e1)
}

/// Inference probability of the positive class for a prepared instance.
pub fn instance_score<F: Scalar>(
    config: &DeepInfConfig,
    template: &ModelParamsT<F>,
    flat: &[Tensor<F>],
    prep: &PreparedT<F>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound: Vec<Var> = flat.iter().map(|t| tape.leaf(t.clone(), false)).collect();
    let mut rng = seeds::rng(0, "inference");
    let out = forward_instance(&mut tape, config, template, &bound, prep, false, &mut rng, false)?;
    Ok(softmax_prob1(tape.value(out.ego_logits).row(0)))
}

/// A trained model: layer parameters plus whatever state is needed to score
/// new instances (feature statistics, optionally fine-tuned embeddings with
/// their sentinel padding row).
pub struct DeepInf {
    pub config: DeepInfConfig,
    pub params: ModelParams,
    pub embedding: Option<Tensor<f32>>,
    pub feature_stats: Option<FeatureStats>,
}

/// Training problem handed to the generic harness.
struct DeepInfProblem<'a> {
    config: &'a DeepInfConfig,
    template: ModelParams,
    train: Vec<Prepared>,
    valid: Vec<Prepared>,
    embedding_init: Option<Tensor<f32>>,
}

impl TrainableModel for DeepInfProblem<'_> {
    fn initial_params(&self) -> Vec<Tensor<f32>> {
        let mut flat = self.template.flatten();
        if let Some(e) = &self.embedding_init {
            flat.push(e.clone());
        }
        flat
    }

    fn decay_flags(&self) -> Vec<bool> {
        let mut flags = self.template.flat_decay();
        if self.embedding_init.is_some() {
            flags.push(false);
        }
        flags
    }

    fn len(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train.len(),
            Split::Valid => self.valid.len(),
        }
    }

    fn label(&self, split: Split, idx: usize) -> bool {
        let prep = match split {
            Split::Train => &self.train[idx],
            Split::Valid => &self.valid[idx],
        };
        prep.label == 1
    }

    fn loss_on(
        &self,
        tape: &mut Tape<f32>,
        bound: &[Var],
        split: Split,
        idx: usize,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let prep = match split {
            Split::Train => &self.train[idx],
            Split::Valid => &self.valid[idx],
        };
        instance_loss(tape, self.config, &self.template, bound, prep, training, rng)
    }

    fn score_with(&self, params: &[Tensor<f32>], split: Split, idx: usize) -> Result<f64> {
        let prep = match split {
            Split::Train => &self.train[idx],
            Split::Valid => &self.valid[idx],
        };
        instance_score(self.config, &self.template, params, prep)
    }
}

/// Cast the pre-trained embedding into the f32 tensor the models consume.
pub fn embedding_tensor(emb: &EmbeddingMatrix) -> Tensor<f32> {
    Tensor::from_fn(emb.vertex_count(), emb.dim(), |i, j| emb.row(i as u32)[j] as f32)
}

fn prepare_all(
    instances: &[SampledInstance],
    emb: &Tensor<f32>,
    table: Option<&VertexFeatureTable>,
    stats: Option<&FeatureStats>,
    config: &DeepInfConfig,
) -> Result<Vec<Prepared>> {
    instances
        .iter()
        .map(|inst| {
            let feats = match (stats, table) {
                (Some(s), Some(t)) => Some(s.standardize::<f32>(inst, t)?),
                _ => None,
            };
            prepare_instance(inst, emb, feats.as_ref(), config)
        })
        .collect()
}

/// Train a model with seeded mini-batches, Adagrad, and early stopping on
/// validation loss; the best-validation parameters are returned.
pub fn train(
    config: &DeepInfConfig,
    train_set: &[SampledInstance],
    valid_set: &[SampledInstance],
    emb: &EmbeddingMatrix,
    table: Option<&VertexFeatureTable>,
) -> Result<(DeepInf, TrainHistory)> {
    config.validate()?;
    if config.use_vertex_features && table.is_none() {
        return Err(Error::Validation(
            "vertex features enabled but no feature table provided".into(),
        ));
    }
    if emb.dim() != config.embed_dim {
        return Err(Error::Validation(format!(
            "embedding dim {} does not match configured {}",
            emb.dim(),
            config.embed_dim
        )));
    }
    let stats = if config.use_vertex_features {
        Some(FeatureStats::fit(train_set, table.unwrap())?)
    } else {
        None
    };
    let emb_tensor = embedding_tensor(emb);
    let train_prep = prepare_all(train_set, &emb_tensor, table, stats.as_ref(), config)?;
    let valid_prep = prepare_all(valid_set, &emb_tensor, table, stats.as_ref(), config)?;
    let template = ModelParams::init(config, config.seed)?;
    let embedding_init = if config.freeze_embeddings {
        None
    } else {
        // append a permanently-zero sentinel row for padded slots
        let mut with_sentinel = Tensor::zeros(emb_tensor.rows() + 1, emb_tensor.cols());
        for i in 0..emb_tensor.rows() {
            with_sentinel.row_mut(i).copy_from_slice(emb_tensor.row(i));
        }
        Some(with_sentinel)
    };
    let problem = DeepInfProblem {
        config,
        template: template.clone(),
        train: train_prep,
        valid: valid_prep,
        embedding_init,
    };
    let fitcfg = FitConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        batch: config.batch,
        max_epochs: config.max_epochs,
        patience: config.patience,
        seed: config.seed,
    };
    let result = fit(&problem, &fitcfg)?;
    let mut params = template;
    params.assign_flat(&result.params)?;
    let embedding = if config.freeze_embeddings {
        None
    } else {
        Some(result.params.last().unwrap().clone())
    };
    Ok((
        DeepInf { config: config.clone(), params, embedding, feature_stats: stats },
        result.history,
    ))
}

impl DeepInf {
    /// Embedding rows used at inference: fine-tuned if trained unfrozen
    /// (sentinel row stripped), otherwise the pre-trained matrix.
    fn effective_embedding(&self, emb: &EmbeddingMatrix) -> Tensor<f32> {
        match &self.embedding {
            Some(e) => {
                let mut out = Tensor::zeros(e.rows() - 1, e.cols());
                for i in 0..out.rows() {
                    out.row_mut(i).copy_from_slice(e.row(i));
                }
                out
            }
            None => embedding_tensor(emb),
        }
    }

    fn prepared_for(
        &self,
        instances: &[SampledInstance],
        emb: &EmbeddingMatrix,
        table: Option<&VertexFeatureTable>,
    ) -> Result<Vec<Prepared>> {
        // inference always uses the frozen (eager) input path
        let mut config = self.config.clone();
        config.freeze_embeddings = true;
        let emb_tensor = self.effective_embedding(emb);
        prepare_all(instances, &emb_tensor, table, self.feature_stats.as_ref(), &config)
    }

    /// Positive-class activation probabilities, inference mode.
    pub fn predict(
        &self,
        instances: &[SampledInstance],
        emb: &EmbeddingMatrix,
        table: Option<&VertexFeatureTable>,
    ) -> Result<Vec<f64>> {
        let prepared = self.prepared_for(instances, emb, table)?;
        let flat = self.params.flatten();
        let mut config = self.config.clone();
        config.freeze_embeddings = true;
        prepared
            .iter()
            .map(|prep| instance_score(&config, &self.params, &flat, prep))
            .collect()
    }

    /// Per-layer, per-head attention coefficients and global score values
    /// for one instance. Verifies the order-preserving relation between
    /// coefficients and scores before returning.
    pub fn attention_scores(
        &self,
        instance: &SampledInstance,
        emb: &EmbeddingMatrix,
        table: Option<&VertexFeatureTable>,
    ) -> Result<AttentionCapture<f32>> {
        if self.config.variant != Variant::Gat {
            return Err(Error::UnsupportedVariant(
                "attention export requires the gat variant".into(),
            ));
        }
        let prepared = self.prepared_for(std::slice::from_ref(instance), emb, table)?;
        let prep = &prepared[0];
        let mut config = self.config.clone();
        config.freeze_embeddings = true;
        let flat = self.params.flatten();
        let mut tape = Tape::new();
        let bound: Vec<Var> = flat.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let mut rng = seeds::rng(0, "inference");
        let out = forward_instance(
            &mut tape, &config, &self.params, &bound, prep, false, &mut rng, true,
        )?;
        let capture = out.capture.expect("attention capture requested");
        let support = prep.support.as_ref().expect("gat support");
        for (l, per_layer) in capture.coefficients.iter().enumerate() {
            for (head_idx, coeffs) in per_layer.iter().enumerate() {
                verify_order_preserving(coeffs, &capture.scores[l][head_idx], support)?;
            }
        }
        Ok(capture)
    }

    pub fn save<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("config".to_string(), self.config.fingerprint());
        if let Some(stats) = &self.feature_stats {
            meta.insert(
                "feature_stats".to_string(),
                serde_json::to_string(stats).expect("stats serialize"),
            );
        }
        let mut tensors: Vec<(String, Tensor<f32>)> = self
            .params
            .flat_names()
            .into_iter()
            .zip(self.params.flatten())
            .collect();
        if let Some(e) = &self.embedding {
            tensors.push(("embedding".to_string(), e.clone()));
        }
        Checkpoint { meta, tensors }.save(out)
    }

    pub fn load<R: std::io::BufRead>(reader: R) -> Result<DeepInf> {
        let ckpt = Checkpoint::load(reader)?;
        let config_json = ckpt
            .meta
            .get("config")
            .ok_or_else(|| Error::Validation("checkpoint missing config block".into()))?;
        let config: DeepInfConfig = serde_json::from_str(config_json)
            .map_err(|e| Error::Validation(format!("bad checkpoint config: {e}")))?;
        let feature_stats: Option<FeatureStats> = match ckpt.meta.get("feature_stats") {
            Some(json) => Some(
                serde_json::from_str(json)
                    .map_err(|e| Error::Validation(format!("bad feature stats: {e}")))?,
            ),
            None => None,
        };
        let mut params = ModelParams::init(&config, config.seed)?;
        let names = params.flat_names();
        let mut flats = Vec::with_capacity(names.len());
        for name in &names {
            let t = ckpt
                .tensor(name)
                .ok_or_else(|| Error::Validation(format!("checkpoint missing tensor '{name}'")))?;
            flats.push(t.clone());
        }
        params.assign_flat(&flats)?;
        let embedding = ckpt.tensor("embedding").cloned();
        Ok(DeepInf { config, params, embedding, feature_stats })
    }
}


/// Check that per-row coefficient rankings agree with the global score
/// ranking over each row's support: a violation is a strict inversion, i.e.
/// `(a_ij - a_ik) * (score_j - score_k) < 0` for support columns j, k of any
/// row i. Ties that collapse under floating-point rounding do not count.
pub fn verify_order_preserving<F: Scalar>(
    coeffs: &Tensor<F>,
    scores: &[F],
    support: &[Vec<usize>],
) -> Result<()> {
    for (i, sup) in support.iter().enumerate() {
        for (ai, &j) in sup.iter().enumerate() {
            for &k in &sup[ai + 1..] {
                let dc = coeffs.get(i, j) - coeffs.get(i, k);
                let ds = scores[j] - scores[k];
                if dc * ds < F::zero() {
                    return Err(Error::Validation(format!(
                        "order preservation violated at row {i}, columns {j}/{k}"
                    )));
                }
            }
        }
    }
    Ok(())
}
