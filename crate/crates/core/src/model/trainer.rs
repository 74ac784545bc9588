//! Generic mini-batch training harness: seeded shuffling, Adagrad updates,
//! per-epoch validation, and best-checkpoint early stopping. Shared by the
//! graph models and the convolutional baseline.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adagrad_step, AdagradState, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::eval;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
}

/// A problem the harness can optimize: immutable prepared data plus tape
/// builders. Parameters travel as a flat tensor list in a fixed order.
pub trait TrainableModel {
    fn initial_params(&self) -> Vec<Tensor<f32>>;
    /// Which parameter tensors receive weight decay.
    fn decay_flags(&self) -> Vec<bool>;
    fn len(&self, split: Split) -> usize;
    fn label(&self, split: Split, idx: usize) -> bool;
    /// Build the scalar loss of one instance. `bound` holds the parameters
    /// as tape leaves in `initial_params` order.
    fn loss_on(
        &self,
        tape: &mut Tape<f32>,
        bound: &[Var],
        split: Split,
        idx: usize,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var>;
    /// Inference-mode positive-class score of one instance under `params`.
    fn score_with(&self, params: &[Tensor<f32>], split: Split, idx: usize) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping;
    /// 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
}

/// Per-epoch trace of a fit.
#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    /// NaN when the validation split has a single class.
    pub valid_auc: Vec<f64>,
    pub best_epoch: usize,
    pub stop_reason: String,
}

impl TrainHistory {
    pub fn best_valid_loss(&self) -> f64 {
        self.valid_loss[self.best_epoch]
    }

    pub fn save<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch train_loss valid_loss valid_auc")?;
        for e in 0..self.train_loss.len() {
            writeln!(
                out,
                "{e} {} {} {}",
                self.train_loss[e], self.valid_loss[e], self.valid_auc[e]
            )?;
        }
        writeln!(out, "best_epoch {}", self.best_epoch)?;
        writeln!(out, "stop_reason {}", self.stop_reason)?;
        Ok(())
    }
}

pub struct FitResult {
    /// Parameters of the best-validation epoch.
    pub params: Vec<Tensor<f32>>,
    pub history: TrainHistory,
}

fn mean_valid_loss<M: TrainableModel>(
    model: &M,
    params: &[Tensor<f32>],
    seed: u64,
) -> Result<f64> {
    let count = model.len(Split::Valid);
    let mut total = 0.0f64;
    let mut rng = seeds::rng(seed, "valid-noop");
    for idx in 0..count {
        let mut tape = Tape::new();
        let bound: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = model.loss_on(&mut tape, &bound, Split::Valid, idx, false, &mut rng)?;
        total += f64::from(tape.value(loss).item());
    }
    Ok(total / count as f64)
}

fn valid_auc<M: TrainableModel>(model: &M, params: &[Tensor<f32>]) -> Result<f64> {
    let count = model.len(Split::Valid);
    let mut labels = Vec::with_capacity(count);
    let mut scores = Vec::with_capacity(count);
    for idx in 0..count {
        labels.push(model.label(Split::Valid, idx));
        scores.push(model.score_with(params, Split::Valid, idx)?);
    }
    match eval::auc(&labels, &scores) {
        Ok(a) => Ok(a),
        Err(Error::UndefinedMetric(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Run the full optimization. Deterministic for a fixed seed: the shuffle and
/// dropout streams are derived from `(seed, epoch, batch, position)`.
pub fn fit<M: TrainableModel>(model: &M, cfg: &FitConfig) -> Result<FitResult> {
    if model.len(Split::Train) == 0 || model.len(Split::Valid) == 0 {
        return Err(Error::EmptyDataset("fit requires nonempty train and valid splits".into()));
    }
    if cfg.batch == 0 || cfg.max_epochs == 0 {
        return Err(Error::Validation("batch and max_epochs must be positive".into()));
    }
    let mut params = model.initial_params();
    let decay = model.decay_flags();
    if params.len() != decay.len() {
        return Err(Error::Validation("decay flags must align with parameters".into()));
    }
    let mut state = AdagradState::new(&params, decay);
    let lr = cfg.lr as f32;
    let wd = cfg.weight_decay as f32;

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        valid_auc: Vec::new(),
        best_epoch: 0,
        stop_reason: String::new(),
    };
    let mut best_loss = f64::INFINITY;
    let mut best_params = params.clone();
    let mut bad_epochs = 0usize;

    let train_len = model.len(Split::Train);
    let mut grad_accum: Vec<Tensor<f32>> =
        params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_len).collect();
        let mut shuffle_rng = seeds::rng_indexed(cfg.seed, "shuffle", &[epoch as u64]);
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0f64;
        for (batch_idx, batch) in order.chunks(cfg.batch).enumerate() {
            for g in grad_accum.iter_mut() {
                g.fill(0.0);
            }
            let mut batch_loss = 0.0f64;
            for (pos, &idx) in batch.iter().enumerate() {
                let mut tape = Tape::new();
                let bound: Vec<Var> =
                    params.iter().map(|t| tape.leaf(t.clone(), true)).collect();
                let mut drop_rng = seeds::rng_indexed(
                    cfg.seed,
                    "dropout",
                    &[epoch as u64, batch_idx as u64, pos as u64],
                );
                let loss =
                    model.loss_on(&mut tape, &bound, Split::Train, idx, true, &mut drop_rng)?;
                let lv = f64::from(tape.value(loss).item());
                if !lv.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite training loss at epoch {epoch}, batch {batch_idx}"
                    )));
                }
                batch_loss += lv;
                let grads = tape.backward(loss)?;
                for (k, b) in bound.iter().enumerate() {
                    if let Some(g) = grads.get_ref(*b) {
                        grad_accum[k].add_assign(g);
                    }
                }
            }
            let inv = 1.0f32 / batch.len() as f32;
            for g in grad_accum.iter_mut() {
                g.scale_assign(inv);
            }
            adagrad_step(&mut params, &grad_accum, &mut state, lr, wd, 1e-10)?;
            epoch_loss += batch_loss;
        }
        history.train_loss.push(epoch_loss / train_len as f64);

        let vl = mean_valid_loss(model, &params, cfg.seed)?;
        if !vl.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.valid_loss.push(vl);
        history.valid_auc.push(valid_auc(model, &params)?);

        if vl < best_loss {
            best_loss = vl;
            best_params = params.clone();
            history.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if cfg.patience > 0 && bad_epochs >= cfg.patience {
                history.stop_reason = format!("patience ({}) exhausted", cfg.patience);
                break;
            }
        }
    }
    if history.stop_reason.is_empty() {
        history.stop_reason = format!("max_epochs ({}) reached", cfg.max_epochs);
    }
    Ok(FitResult { params: best_params, history })
}
