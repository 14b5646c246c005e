//! Matrix-free Hutchinson estimates of `tr(H)` and `tr(H²)`.
//!
//! Each probe is a Rademacher vector drawn from its own ChaCha stream
//! (`seed`, probe index), so the first `n` probes of a run with `m > n`
//! probes coincide with a run of `n` probes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{check_point, eval_gradient, eval_value, ScalarField};
use crate::geometry::critical_grad_tol;
use crate::linalg::{dot, SymMatrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_probes: usize,
    pub seed: u64,
}

fn rademacher(q: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = par::stream_rng(seed, index as u64);
    (0..q).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Per-probe `(vᵀHv, ‖Hv‖²)`, both from a single Hessian-vector product.
fn probe_moments<F: ScalarField + ?Sized>(
    field: &F,
    x: &[f64],
    n_probes: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_point(field, x)?;
    if n_probes == 0 {
        return Err(Error::invalid("need at least one probe"));
    }
    let q = field.dim();
    par::try_map_indexed(n_probes, |i| {
        let v = rademacher(q, seed, i);
        let hv = field.hvp(x, &v);
        if hv.len() != q || hv.iter().any(|c| !c.is_finite()) {
            return Err(Error::EvaluationFailure(format!("Hessian-vector product failed for probe {i}")));
        }
        Ok((dot(&v, &hv), dot(&hv, &hv)))
    })
}

fn summarize(samples: impl Iterator<Item = f64>, seed: u64) -> TraceEstimate {
    let values: Vec<f64> = samples.collect();
    let (mean, std_error) = par::mean_and_std_error(&values);
    TraceEstimate { mean, std_error, n_probes: values.len(), seed }
}

/// Unbiased estimate of `tr(H)`.
pub fn hutchinson_trace<F: ScalarField + ?Sized>(field: &F, x: &[f64], n_probes: usize, seed: u64) -> Result<TraceEstimate> {
    let m = probe_moments(field, x, n_probes, seed)?;
    Ok(summarize(m.iter().map(|p| p.0), seed))
}

/// Unbiased estimate of `tr(H²)` from `E‖Hv‖² = tr(H²)`.
pub fn trace_h2_estimate<F: ScalarField + ?Sized>(field: &F, x: &[f64], n_probes: usize, seed: u64) -> Result<TraceEstimate> {
    let m = probe_moments(field, x, n_probes, seed)?;
    Ok(summarize(m.iter().map(|p| p.1), seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScMinEstimate {
    /// `trace.mean² − trace_h2.mean`. The square of the mean overshoots
    /// `tr(H)²` by `Var(trace.mean) ≈ trace.std_error²` on average.
    pub sc: f64,
    pub trace: TraceEstimate,
    pub trace_h2: TraceEstimate,
    pub grad_norm: f64,
    /// The point is not critical to within `critical_grad_tol`, so the
    /// critical-point formula is only approximate.
    pub not_critical: bool,
}

/// Critical-point scalar curvature `tr(H)² − tr(H²)` from shared probes.
pub fn sc_min_estimate<F: ScalarField + ?Sized>(field: &F, x_min: &[f64], n_probes: usize, seed: u64) -> Result<ScMinEstimate> {
    let value = eval_value(field, x_min)?;
    let grad = eval_gradient(field, x_min)?;
    let grad_norm = dot(&grad, &grad).sqrt();
    let m = probe_moments(field, x_min, n_probes, seed)?;
    let trace = summarize(m.iter().map(|p| p.0), seed);
    let trace_h2 = summarize(m.iter().map(|p| p.1), seed);
    Ok(ScMinEstimate {
        sc: trace.mean * trace.mean - trace_h2.mean,
        trace,
        trace_h2,
        grad_norm,
        not_critical: grad_norm > critical_grad_tol(value),
    })
}

/// `(tr(H)² − tr(H²)) / tr(H)²`, the fraction of `tr(H)²` that survives as
/// curvature at a critical point.
pub fn overparam_ratio(h: &SymMatrix) -> Result<f64> {
    let tr = h.trace();
    if tr == 0.0 {
        return Err(Error::DegenerateTrace);
    }
    let t2 = tr * tr;
    Ok((t2 - h.trace_of_square()) / t2)
}
