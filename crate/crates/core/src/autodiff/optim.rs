//! Adagrad with per-parameter accumulated squared gradients.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Optimizer state: one nonnegative, monotonically non-decreasing
/// accumulator per parameter tensor, plus a flag controlling whether weight
/// decay applies (biases and attention vectors opt out).
#[derive(Debug, Clone)]
pub struct AdagradState<F> {
    accum: Vec<Tensor<F>>,
    decay: Vec<bool>,
    step: u64,
}

impl<F: Scalar> AdagradState<F> {
    pub fn new(params: &[Tensor<F>], decay: Vec<bool>) -> AdagradState<F> {
        assert_eq!(params.len(), decay.len());
        AdagradState {
            accum: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            decay,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn accumulators(&self) -> &[Tensor<F>] {
        &self.accum
    }
}

/// One Adagrad update: `g <- grad + weight_decay * param`, accumulate `g^2`,
/// then `param -= lr * g / (sqrt(accum) + eps)`, elementwise.
pub fn adagrad_step<F: Scalar>(
    params: &mut [Tensor<F>],
    grads: &[Tensor<F>],
    state: &mut AdagradState<F>,
    lr: F,
    weight_decay: F,
    eps: F,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.accum.len() {
        return Err(Error::Validation(format!(
            "adagrad_step arity mismatch: {} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            state.accum.len()
        )));
    }
    for ((param, grad), (acc, &decays)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.accum.iter_mut().zip(state.decay.iter()))
    {
        if param.shape() != grad.shape() {
            return Err(Error::Validation("adagrad_step shape mismatch".into()));
        }
        let wd = if decays { weight_decay } else { F::zero() };
        for ((p, &g0), a) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data().iter())
            .zip(acc.data_mut().iter_mut())
        {
            let g = g0 + wd * *p;
            *a += g * g;
            *p = *p - lr * g / (a.sqrt() + eps);
        }
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_leaves_params() {
        let mut params = vec![Tensor::column(vec![1.0f64, -2.0])];
        let grads = vec![Tensor::column(vec![0.5, 0.5])];
        let mut state = AdagradState::new(&params, vec![true]);
        adagrad_step(&mut params, &grads, &mut state, 0.0, 0.0, 1e-10).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        // accumulator still grows
        assert!(state.accumulators()[0].data()[0] > 0.0);
    }

    #[test]
    fn scalar_recurrence_hand_iterated() {
        let mut params = vec![Tensor::scalar(0.0f64)];
        let grads = vec![Tensor::scalar(1.0f64)];
        let mut state = AdagradState::new(&params, vec![true]);
        adagrad_step(&mut params, &grads, &mut state, 0.1, 0.0, 0.0).unwrap();
        assert!((params[0].item() - (-0.1)).abs() < 1e-12);
        adagrad_step(&mut params, &grads, &mut state, 0.1, 0.0, 0.0).unwrap();
        let expect = -0.1 - 0.1 / 2f64.sqrt();
        assert!((params[0].item() - expect).abs() < 1e-12);
    }

    #[test]
    fn decay_only_shrinks_monotonically() {
        let mut params = vec![Tensor::scalar(2.0f64)];
        let grads = vec![Tensor::scalar(0.0f64)];
        let mut state = AdagradState::new(&params, vec![true]);
        let mut prev = params[0].item();
        for _ in 0..50 {
            adagrad_step(&mut params, &grads, &mut state, 0.1, 0.1, 1e-10).unwrap();
            let cur = params[0].item();
            assert!(cur < prev && cur > 0.0);
            prev = cur;
        }
    }

    #[test]
    fn decay_flag_excludes_tensor() {
        let mut params = vec![Tensor::scalar(2.0f64), Tensor::scalar(2.0f64)];
        let grads = vec![Tensor::scalar(0.0f64), Tensor::scalar(0.0f64)];
        let mut state = AdagradState::new(&params, vec![true, false]);
        adagrad_step(&mut params, &grads, &mut state, 0.1, 0.1, 1e-10).unwrap();
        assert!(params[0].item() < 2.0);
        assert_eq!(params[1].item(), 2.0);
    }

    #[test]
    fn accumulators_monotone() {
        let mut params = vec![Tensor::column(vec![0.3f64, -0.7])];
        let mut state = AdagradState::new(&params, vec![true]);
        let mut prev = vec![0.0f64; 2];
        for k in 0..10 {
            let grads = vec![Tensor::column(vec![(k as f64 * 0.37).sin(), 0.2])];
            adagrad_step(&mut params, &grads, &mut state, 0.05, 1e-4, 1e-10).unwrap();
            for (a, p) in state.accumulators()[0].data().iter().zip(prev.iter_mut()) {
                assert!(*a >= *p);
                *p = *a;
            }
        }
    }
}
