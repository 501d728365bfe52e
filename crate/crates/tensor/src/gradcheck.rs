//! Central-difference gradient oracle.

use crate::error::{Result, TensorError};
use crate::tensor::no_grad;
use crate::Tensor;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every element `i`.
pub fn finite_diff_grad(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, h: f64) -> Tensor<f64> {
    let all: Vec<usize> = (0..x.numel()).collect();
    let g = finite_diff_at(f, x, h, &all);
    Tensor::from_vec(g, x.shape()).expect("same shape as x")
}

/// Central differences at the listed element indices only.
pub fn finite_diff_at(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, h: f64, indices: &[usize]) -> Vec<f64> {
    let base = x.to_vec();
    let eval = |i: usize, delta: f64| {
        let mut v = base.clone();
        v[i] += delta;
        f(&Tensor::from_vec(v, x.shape()).expect("same shape as x"))
    };
    indices
        .iter()
        .map(|&i| (eval(i, h) - eval(i, -h)) / (2.0 * h))
        .collect()
}

/// Worst-case agreement between an analytic and a numeric gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradComparison {
    /// Largest `|a - n| / max(|a|, |n|)` over entries with `|n| >= small`.
    pub max_rel_err: f64,
    /// Largest `|a - n|` over entries with `|n| < small`.
    pub max_abs_err: f64,
    pub checked: usize,
}

impl GradComparison {
    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_err < rel_tol && self.max_abs_err < abs_tol
    }
}

pub fn compare_grads(analytic: &[f64], numeric: &[f64], small: f64) -> GradComparison {
    assert_eq!(analytic.len(), numeric.len());
    let mut out = GradComparison { max_rel_err: 0.0, max_abs_err: 0.0, checked: analytic.len() };
    for (&a, &n) in analytic.iter().zip(numeric) {
        let diff = (a - n).abs();
        if n.abs() < small {
            out.max_abs_err = out.max_abs_err.max(diff);
        } else {
            out.max_rel_err = out.max_rel_err.max(diff / a.abs().max(n.abs()));
        }
    }
    out
}

/// Backward-pass gradient of the scalar `f(x)` with respect to `x`,
/// compared against central differences (optionally at a subset of
/// indices). Entries whose true gradient is below 1e-4 are judged on
/// absolute error.
pub fn check_grad(
    f: impl Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
    x: &Tensor<f64>,
    h: f64,
    indices: Option<&[usize]>,
) -> Result<GradComparison> {
    let leaf = x.requires_grad_(true);
    let y = f(&leaf)?;
    y.backward()?;
    let grad = leaf
        .grad()
        .ok_or_else(|| TensorError::Contract("output does not depend on the checked input".into()))?;

    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..x.numel()).collect();
            &all
        }
    };
    let _guard = no_grad();
    let numeric = finite_diff_at(
        |t| f(t).and_then(|y| y.item()).unwrap_or(f64::NAN),
        x,
        h,
        idx,
    );
    let analytic: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
    Ok(compare_grads(&analytic, &numeric, 1e-4))
}
