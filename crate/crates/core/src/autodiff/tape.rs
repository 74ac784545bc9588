//! Reverse-mode differentiation over a linear tape of dense tensor ops.
//!
//! A `Tape` records the forward computation; `backward` walks it in reverse
//! and accumulates gradients for every node that requires them. Tapes are
//! built per instance and discarded, so parameters enter as leaf copies and
//! their gradients are read out by [`Var`] handle after the pass.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<F> {
    Leaf,
    /// a (m x k) * b (k x n)
    Matmul(usize, usize),
    /// h (m x k) * w^T with w (n x k)
    Linear(usize, usize),
    /// x (m x n) + row vector b (1 x n) broadcast over rows
    AddRowVec(usize, usize),
    Add(usize, usize),
    Scale(usize, F),
    /// elementwise mean of same-shape inputs
    Average(Vec<usize>),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Rc<Vec<usize>>),
    /// rows [a, b) of the input
    SliceRows(usize, usize, usize),
    Elu(usize),
    LeakyRelu(usize, F),
    /// u (m x 1), w (n x 1) -> (m x n) with y_ij = u_i + w_j
    OuterSum(usize, usize),
    /// row softmax restricted to per-row support; zero off support
    MaskedRowSoftmax(usize, Rc<Vec<Vec<usize>>>),
    /// per-column standardization over valid rows; invalid rows output zero
    InstanceNorm { x: usize, valid: Rc<Vec<bool>>, eps: F },
    /// mask entries are 0 or 1/(1-rate)
    Dropout(usize, Rc<Vec<F>>),
    /// mean negative log softmax likelihood over rows
    NllLoss { logits: usize, labels: Rc<Vec<usize>> },
    /// 1-D patch extraction: rows are flattened windows of the input
    Unfold1d { x: usize, kernel: usize, stride: usize },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient of the output w.r.t. `var`; zero tensor if the var never
    /// received gradient flow.
    pub fn get(&self, var: Var, shape: (usize, usize)) -> Tensor<F> {
        match &self.grads[var.index()] {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.0, shape.1),
        }
    }

    pub fn get_ref(&self, var: Var) -> Option<&Tensor<F>> {
        self.grads[var.index()].as_ref()
    }
}

#[derive(Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Tape<F> {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.index()].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced on tape");
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    /// Insert a leaf. `requires_grad` marks trainable parameters; constants
    /// (adjacency matrices, frozen inputs) should pass false so backward
    /// skips them.
    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Error::Validation(format!(
                "matmul shape mismatch: {ar}x{ac} * {br}x{bc}"
            )));
        }
        let value = self.value(a).matmul(self.value(b));
        let rq = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(value, Op::Matmul(a.0, b.0), rq))
    }

    /// `h * w^T`: the affine map of a layer with `w` stored out x in.
    pub fn linear(&mut self, h: Var, w: Var) -> Result<Var> {
        let (_, hc) = self.value(h).shape();
        let (_, wc) = self.value(w).shape();
        if hc != wc {
            return Err(Error::Validation(format!(
                "linear shape mismatch: input width {hc}, weight width {wc}"
            )));
        }
        let value = self.value(h).matmul_nt(self.value(w));
        let rq = self.requires(h.0) || self.requires(w.0);
        Ok(self.push(value, Op::Linear(h.0, w.0), rq))
    }

    pub fn add_row_vec(&mut self, x: Var, b: Var) -> Result<Var> {
        let (_, xc) = self.value(x).shape();
        let (br, bc) = self.value(b).shape();
        if br != 1 || bc != xc {
            return Err(Error::Validation(format!(
                "add_row_vec needs a 1x{xc} bias, got {br}x{bc}"
            )));
        }
        let mut value = self.value(x).clone();
        for i in 0..value.rows() {
            let brow = self.nodes[b.0].value.row(0);
            for (v, bv) in value.row_mut(i).iter_mut().zip(brow.iter()) {
                *v += *bv;
            }
        }
        let rq = self.requires(x.0) || self.requires(b.0);
        Ok(self.push(value, Op::AddRowVec(x.0, b.0), rq))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Validation("add shape mismatch".into()));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rq = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(value, Op::Add(a.0, b.0), rq))
    }

    pub fn scale(&mut self, x: Var, c: F) -> Var {
        let mut value = self.value(x).clone();
        value.scale_assign(c);
        let rq = self.requires(x.0);
        self.push(value, Op::Scale(x.0, c), rq)
    }

    pub fn average(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Validation("average of zero tensors".into()));
        }
        let shape = self.value(xs[0]).shape();
        for &x in xs {
            if self.value(x).shape() != shape {
                return Err(Error::Validation("average shape mismatch".into()));
            }
        }
        let mut value = Tensor::zeros(shape.0, shape.1);
        for &x in xs {
            value.add_assign(self.value(x));
        }
        value.scale_assign(F::one() / F::from_f64(xs.len() as f64));
        let rq = xs.iter().any(|&x| self.requires(x.0));
        Ok(self.push(value, Op::Average(xs.iter().map(|v| v.0).collect()), rq))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Validation("concat of zero tensors".into()));
        }
        let rows = self.value(xs[0]).rows();
        let mut width = 0;
        for &x in xs {
            if self.value(x).rows() != rows {
                return Err(Error::Validation("concat_cols row mismatch".into()));
            }
            width += self.value(x).cols();
        }
        let mut value = Tensor::zeros(rows, width);
        for i in 0..rows {
            let mut off = 0;
            for &x in xs {
                let part = self.value(x).row(i);
                value.row_mut(i)[off..off + part.len()].copy_from_slice(part);
                off += part.len();
            }
        }
        let rq = xs.iter().any(|&x| self.requires(x.0));
        Ok(self.push(value, Op::ConcatCols(xs.iter().map(|v| v.0).collect()), rq))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let (xr, xc) = self.value(x).shape();
        if let Some(&bad) = idx.iter().find(|&&i| i >= xr) {
            return Err(Error::Validation(format!(
                "gather_rows index {bad} out of range for {xr} rows"
            )));
        }
        let mut value = Tensor::zeros(idx.len(), xc);
        for (i, &src) in idx.iter().enumerate() {
            let row = self.value(x).row(src);
            value.row_mut(i).copy_from_slice(row);
        }
        let rq = self.requires(x.0);
        Ok(self.push(value, Op::GatherRows(x.0, idx), rq))
    }

    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        self.gather_rows(x, Rc::new(vec![i]))
    }

    pub fn slice_rows(&mut self, x: Var, a: usize, b: usize) -> Result<Var> {
        let (xr, xc) = self.value(x).shape();
        if a >= b || b > xr {
            return Err(Error::Validation(format!(
                "slice_rows [{a}, {b}) invalid for {xr} rows"
            )));
        }
        let mut value = Tensor::zeros(b - a, xc);
        for i in a..b {
            let row = self.value(x).row(i);
            value.row_mut(i - a).copy_from_slice(row);
        }
        let rq = self.requires(x.0);
        Ok(self.push(value, Op::SliceRows(x.0, a, b), rq))
    }

    /// Exponential linear unit: `x` for `x > 0`, else `exp(x) - 1`.
    pub fn elu(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            if *v <= F::zero() {
                *v = v.exp() - F::one();
            }
        }
        let rq = self.requires(x.0);
        self.push(value, Op::Elu(x.0), rq)
    }

    /// `x` for `x > 0`, else `slope * x`.
    pub fn leaky_relu(&mut self, x: Var, slope: F) -> Var {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            if *v <= F::zero() {
                *v = *v * slope;
            }
        }
        let rq = self.requires(x.0);
        self.push(value, Op::LeakyRelu(x.0, slope), rq)
    }

    pub fn outer_sum(&mut self, u: Var, w: Var) -> Result<Var> {
        let (ur, uc) = self.value(u).shape();
        let (wr, wc) = self.value(w).shape();
        if uc != 1 || wc != 1 {
            return Err(Error::Validation("outer_sum expects column vectors".into()));
        }
        let mut value = Tensor::zeros(ur, wr);
        for i in 0..ur {
            let ui = self.value(u).get(i, 0);
            for j in 0..wr {
                value.set(i, j, ui + self.value(w).get(j, 0));
            }
        }
        let rq = self.requires(u.0) || self.requires(w.0);
        Ok(self.push(value, Op::OuterSum(u.0, w.0), rq))
    }

    /// Softmax per row restricted to the row's support set; entries off
    /// support are exactly zero. Every row must have nonempty support.
    pub fn masked_row_softmax(&mut self, e: Var, support: Rc<Vec<Vec<usize>>>) -> Result<Var> {
        let (rows, cols) = self.value(e).shape();
        if support.len() != rows {
            return Err(Error::Validation("support length must equal row count".into()));
        }
        let mut value = Tensor::zeros(rows, cols);
        for (i, sup) in support.iter().enumerate() {
            if sup.is_empty() {
                return Err(Error::Validation(format!("row {i} has empty support")));
            }
            if let Some(&bad) = sup.iter().find(|&&j| j >= cols) {
                return Err(Error::Validation(format!(
                    "support column {bad} out of range for {cols} columns"
                )));
            }
            let maxv = sup
                .iter()
                .map(|&j| self.value(e).get(i, j))
                .fold(F::neg_infinity(), |a, b| a.max(b));
            let mut total = F::zero();
            for &j in sup {
                let ex = (self.value(e).get(i, j) - maxv).exp();
                value.set(i, j, ex);
                total += ex;
            }
            for &j in sup {
                let v = value.get(i, j) / total;
                value.set(i, j, v);
            }
        }
        let rq = self.requires(e.0);
        Ok(self.push(value, Op::MaskedRowSoftmax(e.0, support), rq))
    }

    /// Per-column standardization over valid rows: subtract the mean and
    /// divide by sqrt(population variance + eps). Invalid (padded) rows
    /// output zero and are excluded from the statistics.
    pub fn instance_norm(&mut self, x: Var, valid: Rc<Vec<bool>>, eps: F) -> Result<Var> {
        let rows = self.value(x).rows();
        if valid.len() != rows {
            return Err(Error::Validation("valid mask length must equal row count".into()));
        }
        let m = valid.iter().filter(|&&v| v).count();
        if m == 0 {
            return Err(Error::Validation("instance_norm with all rows padded".into()));
        }
        let value = instance_norm_forward(self.value(x), &valid, eps, m);
        let rq = self.requires(x.0);
        Ok(self.push(value, Op::InstanceNorm { x: x.0, valid, eps }, rq))
    }

    /// Inverted dropout: zero each element with probability `rate`, scale
    /// survivors by `1/(1-rate)`. Identity at `rate == 0`; inference callers
    /// simply skip the op.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Validation(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = F::from_f64(1.0 / (1.0 - rate));
        let mask: Rc<Vec<F>> = Rc::new(
            (0..self.value(x).len())
                .map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep })
                .collect(),
        );
        let mut value = self.value(x).clone();
        for (v, &m) in value.data_mut().iter_mut().zip(mask.iter()) {
            *v *= m;
        }
        let rq = self.requires(x.0);
        Ok(self.push(value, Op::Dropout(x.0, mask), rq))
    }

    /// Mean negative log likelihood of the labels under row-wise softmax.
    pub fn nll_loss(&mut self, logits: Var, labels: Rc<Vec<usize>>) -> Result<Var> {
        let (rows, cols) = self.value(logits).shape();
        if labels.len() != rows {
            return Err(Error::Validation("one label per logit row required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= cols) {
            return Err(Error::Validation(format!("label {bad} out of range")));
        }
        let mut total = F::zero();
        for (i, &y) in labels.iter().enumerate() {
            let row = self.value(logits).row(i);
            let maxv = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
            let lse = row
                .iter()
                .map(|&z| (z - maxv).exp())
                .fold(F::zero(), |a, b| a + b)
                .ln()
                + maxv;
            total += lse - row[y];
        }
        let value = Tensor::scalar(total / F::from_f64(rows as f64));
        let rq = self.requires(logits.0);
        Ok(self.push(value, Op::NllLoss { logits: logits.0, labels }, rq))
    }

    /// Extract sliding windows: output row p is the flattened rows
    /// `[p*stride, p*stride + kernel)` of the input.
    pub fn unfold1d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let (len, ch) = self.value(x).shape();
        if kernel == 0 || stride == 0 || kernel > len {
            return Err(Error::Validation(format!(
                "unfold1d kernel {kernel} / stride {stride} invalid for length {len}"
            )));
        }
        let positions = (len - kernel) / stride + 1;
        let mut value = Tensor::zeros(positions, kernel * ch);
        for p in 0..positions {
            for k in 0..kernel {
                let src = self.value(x).row(p * stride + k);
                value.row_mut(p)[k * ch..(k + 1) * ch].copy_from_slice(src);
            }
        }
        let rq = self.requires(x.0);
        Ok(self.push(value, Op::Unfold1d { x: x.0, kernel, stride }, rq))
    }

    /// Reverse pass from a scalar output. Returns per-var gradients for all
    /// nodes with `requires_grad`.
    pub fn backward(&self, output: Var) -> Result<Gradients<F>> {
        if self.value(output).len() != 1 {
            return Err(Error::Validation(
                "backward requires a scalar (1x1) output".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        grads[output.index()] = Some(Tensor::scalar(F::one()));
        for id in (0..=output.index()).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<F>>], id: usize, delta: Tensor<F>) {
        if !self.nodes[id].requires_grad {
            return;
        }
        match &mut grads[id] {
            Some(g) => g.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, id: usize, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.nodes[*a].requires_grad {
                    let da = g.matmul_nt(&self.nodes[*b].value);
                    self.accumulate(grads, *a, da);
                }
                if self.nodes[*b].requires_grad {
                    let db = self.nodes[*a].value.matmul_tn(g);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Linear(h, w) => {
                if self.nodes[*h].requires_grad {
                    let dh = g.matmul(&self.nodes[*w].value);
                    self.accumulate(grads, *h, dh);
                }
                if self.nodes[*w].requires_grad {
                    let dw = g.matmul_tn(&self.nodes[*h].value);
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::AddRowVec(x, b) => {
                if self.nodes[*x].requires_grad {
                    self.accumulate(grads, *x, g.clone());
                }
                if self.nodes[*b].requires_grad {
                    let mut db = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, &gv) in db.row_mut(0).iter_mut().zip(g.row(i).iter()) {
                            *d += gv;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Scale(x, c) => {
                let mut dx = g.clone();
                dx.scale_assign(*c);
                self.accumulate(grads, *x, dx);
            }
            Op::Average(xs) => {
                let inv = F::one() / F::from_f64(xs.len() as f64);
                for &x in xs {
                    let mut dx = g.clone();
                    dx.scale_assign(inv);
                    self.accumulate(grads, x, dx);
                }
            }
            Op::ConcatCols(xs) => {
                let mut off = 0;
                for &x in xs {
                    let w = self.nodes[x].value.cols();
                    if self.nodes[x].requires_grad {
                        let mut dx = Tensor::zeros(g.rows(), w);
                        for i in 0..g.rows() {
                            dx.row_mut(i).copy_from_slice(&g.row(i)[off..off + w]);
                        }
                        self.accumulate(grads, x, dx);
                    }
                    off += w;
                }
            }
            Op::GatherRows(x, idx) => {
                let (xr, xc) = self.nodes[*x].value.shape();
                let mut dx = Tensor::zeros(xr, xc);
                for (i, &src) in idx.iter().enumerate() {
                    for (d, &gv) in dx.row_mut(src).iter_mut().zip(g.row(i).iter()) {
                        *d += gv;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SliceRows(x, a, _b) => {
                let (xr, xc) = self.nodes[*x].value.shape();
                let mut dx = Tensor::zeros(xr, xc);
                for i in 0..g.rows() {
                    dx.row_mut(a + i).copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Elu(x) => {
                let mut dx = g.clone();
                let xs = self.nodes[*x].value.data();
                let ys = self.nodes[id].value.data();
                for ((d, &xv), &yv) in dx.data_mut().iter_mut().zip(xs.iter()).zip(ys.iter()) {
                    if xv <= F::zero() {
                        // d elu / dx = exp(x) = y + 1 on the negative branch
                        *d *= yv + F::one();
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::LeakyRelu(x, slope) => {
                let mut dx = g.clone();
                let xs = self.nodes[*x].value.data();
                for (d, &xv) in dx.data_mut().iter_mut().zip(xs.iter()) {
                    if xv <= F::zero() {
                        *d *= *slope;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::OuterSum(u, w) => {
                if self.nodes[*u].requires_grad {
                    let mut du = Tensor::zeros(g.rows(), 1);
                    for i in 0..g.rows() {
                        let s = g.row(i).iter().fold(F::zero(), |a, &b| a + b);
                        du.set(i, 0, s);
                    }
                    self.accumulate(grads, *u, du);
                }
                if self.nodes[*w].requires_grad {
                    let mut dw = Tensor::zeros(g.cols(), 1);
                    for i in 0..g.rows() {
                        for (j, &gv) in g.row(i).iter().enumerate() {
                            let cur = dw.get(j, 0);
                            dw.set(j, 0, cur + gv);
                        }
                    }
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::MaskedRowSoftmax(e, support) => {
                let y = &self.nodes[id].value;
                let mut de = Tensor::zeros(y.rows(), y.cols());
                for (i, sup) in support.iter().enumerate() {
                    let mut dot = F::zero();
                    for &j in sup {
                        dot += g.get(i, j) * y.get(i, j);
                    }
                    for &j in sup {
                        de.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                self.accumulate(grads, *e, de);
            }
            Op::InstanceNorm { x, valid, eps } => {
                let dx = instance_norm_backward(
                    &self.nodes[*x].value,
                    &self.nodes[id].value,
                    g,
                    valid,
                    *eps,
                );
                self.accumulate(grads, *x, dx);
            }
            Op::Dropout(x, mask) => {
                let mut dx = g.clone();
                for (d, &m) in dx.data_mut().iter_mut().zip(mask.iter()) {
                    *d *= m;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::NllLoss { logits, labels } => {
                let z = &self.nodes[*logits].value;
                let (rows, cols) = z.shape();
                let scale = g.item() / F::from_f64(rows as f64);
                let mut dz = Tensor::zeros(rows, cols);
                for (i, &y) in labels.iter().enumerate() {
                    let row = z.row(i);
                    let maxv = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
                    let total = row
                        .iter()
                        .map(|&v| (v - maxv).exp())
                        .fold(F::zero(), |a, b| a + b);
                    for j in 0..cols {
                        let p = (row[j] - maxv).exp() / total;
                        let delta = if j == y { F::one() } else { F::zero() };
                        dz.set(i, j, scale * (p - delta));
                    }
                }
                self.accumulate(grads, *logits, dz);
            }
            Op::Unfold1d { x, kernel, stride } => {
                let (len, ch) = self.nodes[*x].value.shape();
                let mut dx = Tensor::zeros(len, ch);
                for p in 0..g.rows() {
                    for k in 0..*kernel {
                        let dst = dx.row_mut(p * stride + k);
                        let src = &g.row(p)[k * ch..(k + 1) * ch];
                        for (d, &gv) in dst.iter_mut().zip(src.iter()) {
                            *d += gv;
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
        }
    }
}

fn instance_norm_forward<F: Scalar>(
    x: &Tensor<F>,
    valid: &[bool],
    eps: F,
    m: usize,
) -> Tensor<F> {
    let (rows, cols) = x.shape();
    let mf = F::from_f64(m as f64);
    let mut out = Tensor::zeros(rows, cols);
    for j in 0..cols {
        let mut mean = F::zero();
        for i in 0..rows {
            if valid[i] {
                mean += x.get(i, j);
            }
        }
        mean = mean / mf;
        let mut var = F::zero();
        for i in 0..rows {
            if valid[i] {
                let d = x.get(i, j) - mean;
                var += d * d;
            }
        }
        var = var / mf;
        let inv = F::one() / (var + eps).sqrt();
        for i in 0..rows {
            if valid[i] {
                out.set(i, j, (x.get(i, j) - mean) * inv);
            }
        }
    }
    out
}

fn instance_norm_backward<F: Scalar>(
    x: &Tensor<F>,
    y: &Tensor<F>,
    g: &Tensor<F>,
    valid: &[bool],
    eps: F,
) -> Tensor<F> {
    let (rows, cols) = x.shape();
    let m = valid.iter().filter(|&&v| v).count();
    let mf = F::from_f64(m as f64);
    let mut dx = Tensor::zeros(rows, cols);
    for j in 0..cols {
        let mut mean = F::zero();
        for i in 0..rows {
            if valid[i] {
                mean += x.get(i, j);
            }
        }
        mean = mean / mf;
        let mut var = F::zero();
        for i in 0..rows {
            if valid[i] {
                let d = x.get(i, j) - mean;
                var += d * d;
            }
        }
        var = var / mf;
        let inv = F::one() / (var + eps).sqrt();
        let mut sum_g = F::zero();
        let mut sum_gy = F::zero();
        for i in 0..rows {
            if valid[i] {
                sum_g += g.get(i, j);
                sum_gy += g.get(i, j) * y.get(i, j);
            }
        }
        for i in 0..rows {
            if valid[i] {
                let v = inv * (g.get(i, j) - sum_g / mf - y.get(i, j) * sum_gy / mf);
                dx.set(i, j, v);
            }
        }
    }
    dx
}

/// Forward-only instance normalization for frozen input assembly; shares the
/// math with the differentiable tape op.
pub fn instance_norm_value<F: Scalar>(x: &Tensor<F>, valid: &[bool], eps: F) -> Result<Tensor<F>> {
    if valid.len() != x.rows() {
        return Err(Error::Validation("valid mask length must equal row count".into()));
    }
    let m = valid.iter().filter(|&&v| v).count();
    if m == 0 {
        return Err(Error::Validation("instance_norm with all rows padded".into()));
    }
    Ok(instance_norm_forward(x, valid, eps, m))
}
