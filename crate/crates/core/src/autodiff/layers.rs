//! Graph layer primitives on top of the tape: normalized-adjacency
//! propagation, masked graph attention with multi-head aggregation, and
//! parameter initialization.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seeds;

/// Nonlinearity applied by a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Elu,
    LeakyRelu(f64),
}

impl Activation {
    pub fn apply<F: Scalar>(self, tape: &mut Tape<F>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Elu => tape.elu(x),
            Activation::LeakyRelu(slope) => tape.leaky_relu(x, F::from_f64(slope)),
        }
    }
}

/// Head aggregation mode for multi-head attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    Concat,
    Average,
}

/// Symmetrically normalized adjacency with analytic self-loops:
/// `D^{-1/2} (A + I) D^{-1/2}` over the local graph, where padded vertices
/// keep only their self-loop (an identity pass-through row).
pub fn gcn_norm_adjacency<F: Scalar>(local: &Graph, pad_mask: &[bool]) -> Tensor<F> {
    let n = local.vertex_count();
    debug_assert_eq!(pad_mask.len(), n);
    let mut a = Tensor::<F>::zeros(n, n);
    for i in 0..n {
        a.set(i, i, F::one());
    }
    for (u, v, w) in local.edges() {
        let w = F::from_f64(w);
        a.set(u as usize, v as usize, w);
        a.set(v as usize, u as usize, w);
    }
    let mut inv_sqrt = vec![F::zero(); n];
    for (i, s) in inv_sqrt.iter_mut().enumerate() {
        let deg = a.row(i).iter().fold(F::zero(), |acc, &x| acc + x);
        *s = F::one() / deg.sqrt();
    }
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != F::zero() {
                a.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    a
}

/// Attention support sets: each real vertex attends to its local neighbors
/// and itself; padded vertices attend only to themselves. Lists are sorted.
pub fn attention_support(local: &Graph, pad_mask: &[bool]) -> Rc<Vec<Vec<usize>>> {
    let n = local.vertex_count();
    let mut support = Vec::with_capacity(n);
    for i in 0..n {
        let mut sup: Vec<usize> = vec![i];
        if !pad_mask[i] {
            sup.extend(local.neighbors(i as u32).iter().map(|&v| v as usize));
        }
        sup.sort_unstable();
        support.push(sup);
    }
    Rc::new(support)
}

/// One propagation layer `g(Anorm * H * W^T + b)`.
pub fn gcn_layer<F: Scalar>(
    tape: &mut Tape<F>,
    h: Var,
    anorm: Var,
    w: Var,
    b: Var,
    activation: Activation,
) -> Result<Var> {
    let hw = tape.linear(h, w)?;
    let agg = tape.matmul(anorm, hw)?;
    let biased = tape.add_row_vec(agg, b)?;
    Ok(activation.apply(tape, biased))
}

/// One attention head: projections, coefficients, and per-vertex scores.
pub struct GatHead {
    /// Row-stochastic attention coefficients over the support (n x n).
    pub coefficients: Var,
    /// Projected features `H W^T` (n x head_dim).
    pub projection: Var,
    /// Per-vertex score `q^T W h_j` (n x 1): the global attention ranking.
    pub scores: Var,
}

/// Edge-restricted softmax attention: coefficients
/// `a_ij = softmax_j(LeakyReLU(c^T [W h_i || W h_j]))` over the support of
/// row i. `c` is a column vector of length `2 * head_dim`, conceptually
/// split into `[p || q]`.
pub fn gat_attention<F: Scalar>(
    tape: &mut Tape<F>,
    h: Var,
    support: &Rc<Vec<Vec<usize>>>,
    w: Var,
    c: Var,
    slope: f64,
) -> Result<GatHead> {
    let head_dim = tape.value(w).rows();
    let (cr, cc) = tape.value(c).shape();
    if cr != 2 * head_dim || cc != 1 {
        return Err(Error::Validation(format!(
            "attention vector must be {}x1, got {cr}x{cc}",
            2 * head_dim
        )));
    }
    let proj = tape.linear(h, w)?;
    let p = tape.slice_rows(c, 0, head_dim)?;
    let q = tape.slice_rows(c, head_dim, 2 * head_dim)?;
    let self_part = tape.matmul(proj, p)?;
    let peer_part = tape.matmul(proj, q)?;
    let logits = tape.outer_sum(self_part, peer_part)?;
    let e = tape.leaky_relu(logits, F::from_f64(slope));
    let coefficients = tape.masked_row_softmax(e, Rc::clone(support))?;
    Ok(GatHead { coefficients, projection: proj, scores: peer_part })
}

/// K independent attention heads aggregated by concatenation or averaging,
/// with the bias and activation applied after aggregation. Returns the layer
/// output and the per-head attention artifacts for analysis.
#[allow(clippy::too_many_arguments)]
pub fn multi_head<F: Scalar>(
    tape: &mut Tape<F>,
    h: Var,
    support: &Rc<Vec<Vec<usize>>>,
    head_params: &[(Var, Var)],
    bias: Var,
    mode: HeadMode,
    activation: Activation,
    slope: f64,
) -> Result<(Var, Vec<GatHead>)> {
    if head_params.is_empty() {
        return Err(Error::Validation("multi_head requires at least one head".into()));
    }
    let dim = tape.value(head_params[0].0).rows();
    let mut heads = Vec::with_capacity(head_params.len());
    let mut outputs = Vec::with_capacity(head_params.len());
    for &(w, c) in head_params {
        if tape.value(w).rows() != dim {
            return Err(Error::Validation("inconsistent head output widths".into()));
        }
        let head = gat_attention(tape, h, support, w, c, slope)?;
        outputs.push(tape.matmul(head.coefficients, head.projection)?);
        heads.push(head);
    }
    let agg = match mode {
        HeadMode::Concat => tape.concat_cols(&outputs)?,
        HeadMode::Average => tape.average(&outputs)?,
    };
    let biased = tape.add_row_vec(agg, bias)?;
    Ok((activation.apply(tape, biased), heads))
}

/// Glorot-uniform matrix of shape `rows x cols` with explicit fan sizes:
/// i.i.d. uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_with<F: Scalar>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<F> {
    assert!(fan_in >= 1 && fan_out >= 1, "fans must be at least 1");
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| {
        F::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound)
    })
}

/// Glorot-initialized weight matrix `fan_out x fan_in`, deterministic per
/// seed.
pub fn glorot_init<F: Scalar>(fan_in: usize, fan_out: usize, seed: u64) -> Tensor<F> {
    let mut rng = seeds::rng(seed, "glorot");
    glorot_with(fan_out, fan_in, fan_in, fan_out, &mut rng)
}
