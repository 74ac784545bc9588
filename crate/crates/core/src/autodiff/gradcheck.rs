//! Central finite-difference verification of analytic gradients at f64.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub passed: bool,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
}

/// Compare analytic gradients against central finite differences of `eval`.
///
/// `eval` must rebuild the forward computation from scratch for the given
/// inputs and return the scalar output; `analytic` holds one gradient tensor
/// per input, in the same order. Elements where both gradients are below
/// 1e-7 in magnitude are accepted without a ratio test.
pub fn grad_check<E>(
    eval: E,
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    E: Fn(&[Tensor<f64>]) -> Result<f64>,
{
    if inputs.len() != analytic.len() {
        return Err(Error::Validation(
            "grad_check needs one analytic gradient per input".into(),
        ));
    }
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut worst = (0, 0);
    let mut checked = 0usize;
    for (t, grad) in analytic.iter().enumerate() {
        if grad.shape() != inputs[t].shape() {
            return Err(Error::Validation(format!(
                "analytic gradient {t} shape mismatch"
            )));
        }
        for e in 0..inputs[t].len() {
            let orig = work[t].data()[e];
            work[t].data_mut()[e] = orig + h;
            let fp = eval(&work)?;
            work[t].data_mut()[e] = orig - h;
            let fm = eval(&work)?;
            work[t].data_mut()[e] = orig;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite values while probing input {t} element {e}"
                )));
            }
            let fd = (fp - fm) / (2.0 * h);
            let an = grad.data()[e];
            if !an.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite analytic gradient at input {t} element {e}"
                )));
            }
            checked += 1;
            let rel = if an.abs() < 1e-7 && fd.abs() < 1e-7 {
                0.0
            } else {
                (an - fd).abs() / an.abs().max(fd.abs())
            };
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = (t, e);
            }
        }
    }
    Ok(GradCheckReport { max_rel_err, checked, passed: max_rel_err < tol, worst })
}
