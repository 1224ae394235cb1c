//! Central-difference verification of analytic gradients.

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Outcome of a gradient check over a set of input elements.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// Flat element index attaining the maximum.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

const REL_FLOOR: f64 = 1e-8;

fn eval<T: Element, F>(f: &F, x: Tensor<T>) -> Result<f64>
where
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let id = g.constant(x);
    let out = f(&mut g, id)?;
    g.value(out).item().map(Element::as_f64)
}

/// Checks the gradient of the scalar function `f` at `x` over every element.
///
/// `f` receives a graph and the node holding `x` and must return a scalar
/// node. The analytic gradient comes from [`Graph::backward`]; the numeric
/// one from `(f(x + eps) - f(x - eps)) / (2 eps)`, evaluated in `T`.
pub fn grad_check<T: Element, F>(f: F, x: &Tensor<T>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    grad_check_at(f, x, eps, &all)
}

/// Like [`grad_check`] but only perturbs the listed flat indices.
pub fn grad_check_at<T: Element, F>(
    f: F,
    x: &Tensor<T>,
    eps: f64,
    indices: &[usize],
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    let numeric = numeric_gradient(&f, x, eps, indices)?;
    let analytic = analytic_gradient(&f, x)?;
    Ok(compare(&analytic, &numeric, indices))
}

/// `∂f/∂x` from [`Graph::backward`], widened to `f64`.
pub fn analytic_gradient<T: Element, F>(f: F, x: &Tensor<T>) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let xid = g.param(x.clone());
    let out = f(&mut g, xid)?;
    g.backward(out)?;
    Ok(g.grad_or_zeros(xid).data().iter().map(|v| v.as_f64()).collect())
}

/// Central differences at the listed indices, in the listed order.
pub fn numeric_gradient<T: Element, F>(f: F, x: &Tensor<T>, eps: f64, indices: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    if !(eps > 0.0) {
        return Err(Error::Spec(format!("grad_check eps must be > 0, got {eps}")));
    }
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= x.numel() {
            return Err(Error::Spec(format!(
                "grad_check index {i} outside {} elements",
                x.numel()
            )));
        }
        let mut plus = x.clone();
        let mut minus = x.clone();
        let base = x.data()[i];
        plus.data_mut()[i] = base + T::from_f64(eps);
        minus.data_mut()[i] = base - T::from_f64(eps);
        // the step actually taken after rounding to T
        let step = plus.data()[i].as_f64() - minus.data()[i].as_f64();
        let fp = eval(&f, plus)?;
        let fm = eval(&f, minus)?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "function is not finite around element {i} (f+ = {fp}, f- = {fm})"
            )));
        }
        out.push((fp - fm) / step);
    }
    Ok(out)
}

/// Worst relative disagreement; `analytic` is indexed by flat element,
/// `numeric[j]` belongs to `indices[j]`.
pub fn compare(analytic: &[f64], numeric: &[f64], indices: &[usize]) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    for (&i, &n) in indices.iter().zip(numeric) {
        let a = analytic[i];
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error || report.checked == 1 {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.worst_analytic = a;
            report.worst_numeric = n;
        }
    }
    report
}
