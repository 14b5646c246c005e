//! Numerical experiments around flat minima: perturbation robustness,
//! Ornstein–Uhlenbeck escape from a quadratic basin, curvature of minibatch
//! Hessians, and the curvature map of the damped saddle field.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::trace_h2_estimate;
use crate::fields::{eval_gradient, eval_hessian, eval_value, make_saddle_field, SaddleFieldParams, ScalarField};
use crate::geometry::{scalar_curvature_at_min, scalar_curvature_from_derivatives};
use crate::linalg::{dot, eig_sym, sqrt_psd, SymMatrix};
use crate::par;

// ---------------------------------------------------------------------------
// perturbations

/// How perturbation vectors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// `ε d` with `d` uniform on the unit sphere.
    UnitSphere,
    /// `ε z` with `z ~ N(0, I)`: independent `N(0, ε²)` noise on every coordinate.
    Gaussian,
}

/// Where `tr(H²)` in the bound came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Dense,
    Hutchinson,
}

/// Above this many parameters the bound uses a Hutchinson estimate.
pub const DENSE_TRACE_LIMIT: usize = 2000;
const BOUND_PROBES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub epsilon: f64,
    pub mode: PerturbationMode,
    pub n_directions: usize,
    pub seed: u64,
    pub grad_norm: f64,
    pub trace_h2: f64,
    pub trace_source: TraceSource,
    /// `ε⁴/4 · tr(H²)`.
    pub bound: f64,
    /// Multiplicative slack `10 ε` applied before counting a violation.
    pub slack: f64,
    /// `(f(x + p) − f(x))²` per successful sample, in sample order.
    pub deltas: Vec<f64>,
    /// `‖p‖` per successful sample; equal to ε in unit-sphere mode.
    pub radii: Vec<f64>,
    pub mean_delta: f64,
    pub max_delta: f64,
    /// Largest `delta / (‖p‖⁴/4 · tr(H²))`.
    pub max_bound_ratio: f64,
    pub violations: usize,
    /// Samples whose perturbed value was not finite.
    pub failures: usize,
}

/// Squared loss change under small random perturbations, compared against
/// `‖p‖⁴/4 · tr(H²)`. The bound scales with the actual norm of each
/// perturbation, so it applies per sample in Gaussian mode too.
pub fn perturbation_sweep<F: ScalarField + ?Sized>(
    field: &F,
    x_min: &[f64],
    epsilon: f64,
    n_directions: usize,
    mode: PerturbationMode,
    seed: u64,
) -> Result<PerturbationReport> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if n_directions == 0 {
        return Err(Error::invalid("need at least one direction"));
    }
    let q = field.dim();
    let f0 = eval_value(field, x_min)?;
    let grad = eval_gradient(field, x_min)?;
    let (trace_h2, trace_source) = if q <= DENSE_TRACE_LIMIT {
        (eval_hessian(field, x_min)?.trace_of_square(), TraceSource::Dense)
    } else {
        (trace_h2_estimate(field, x_min, BOUND_PROBES, seed)?.mean, TraceSource::Hutchinson)
    };

    let samples = par::map_indexed(n_directions, |i| {
        let mut rng = par::stream_rng(seed, i as u64);
        let mut d: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
        if mode == PerturbationMode::UnitSphere {
            let n = dot(&d, &d).sqrt();
            d.iter_mut().for_each(|c| *c /= n);
        }
        let x: Vec<f64> = x_min.iter().zip(&d).map(|(xi, di)| xi + epsilon * di).collect();
        let radius = epsilon * dot(&d, &d).sqrt();
        let f = field.value(&x);
        f.is_finite().then(|| ((f - f0) * (f - f0), radius))
    });

    let slack = 10.0 * epsilon;
    let mut deltas = Vec::with_capacity(n_directions);
    let mut radii = Vec::with_capacity(n_directions);
    let mut violations = 0;
    let mut max_bound_ratio: f64 = 0.0;
    for (delta, r) in samples.iter().flatten() {
        let b = r.powi(4) / 4.0 * trace_h2;
        if *delta > b * (1.0 + slack) {
            violations += 1;
        }
        let ratio = if b > 0.0 { delta / b } else if *delta == 0.0 { 0.0 } else { f64::INFINITY };
        max_bound_ratio = max_bound_ratio.max(ratio);
        deltas.push(*delta);
        radii.push(*r);
    }
    let failures = n_directions - deltas.len();
    let mean_delta = if deltas.is_empty() { f64::NAN } else { par::ordered_sum(&deltas) / deltas.len() as f64 };
    let max_delta = deltas.iter().copied().fold(f64::NAN, f64::max);
    Ok(PerturbationReport {
        epsilon,
        mode,
        n_directions,
        seed,
        grad_norm: dot(&grad, &grad).sqrt(),
        trace_h2,
        trace_source,
        bound: epsilon.powi(4) / 4.0 * trace_h2,
        slack,
        deltas,
        radii,
        mean_delta,
        max_delta,
        max_bound_ratio,
        violations,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Ornstein–Uhlenbeck escape

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub t: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Mean of `½ x_tᵀ H x_t` over paths.
    pub empirical_escape: f64,
    pub std_error: f64,
    /// `t/2 · tr(H²)`.
    pub predicted: f64,
    /// `|empirical − predicted| / predicted`; zero when both vanish.
    pub rel_error: f64,
}

/// Paths farther than this from the minimum count as diverged.
const ESCAPE_BLOWUP: f64 = 1e8;

/// Euler–Maruyama simulation of `dx = −H x dt + H^{1/2} dW` from `x₀ = 0`
/// on the quadratic model `½ xᵀ H x`.
pub fn ou_escape(h: &SymMatrix, t: f64, dt: f64, n_paths: usize, seed: u64) -> Result<EscapeReport> {
    ou_escape_paths(h, t, dt, n_paths, seed).map(|(report, _)| report)
}

/// [`ou_escape`] together with the final `½ x_tᵀ H x_t` of every path.
pub fn ou_escape_paths(h: &SymMatrix, t: f64, dt: f64, n_paths: usize, seed: u64) -> Result<(EscapeReport, Vec<f64>)> {
    let root = sqrt_psd(h)?.root;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("t must be non-negative, got {t}")));
    }
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let lambda_max = eig_sym(h)?.eigenvalues.last().copied().unwrap_or(0.0);
    if lambda_max > 0.0 && dt > 0.1 / lambda_max * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("dt = {dt} exceeds the stability limit 0.1/λ_max = {}", 0.1 / lambda_max)));
    }
    let n_steps = (t / dt).round() as usize;
    if (n_steps as f64 * dt - t).abs() > 1e-9 * t.max(dt) {
        return Err(Error::invalid(format!("t = {t} is not a multiple of dt = {dt}")));
    }

    let q = h.dim();
    let sqrt_dt = dt.sqrt();
    let escapes = par::try_map_indexed(n_paths, |p| {
        let mut rng = par::stream_rng(seed, p as u64);
        let mut x = vec![0.0; q];
        let mut dw = vec![0.0; q];
        for step in 1..=n_steps {
            for w in dw.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = sqrt_dt * z;
            }
            let drift = h.matvec(&x);
            let noise = root.matvec(&dw);
            for i in 0..q {
                x[i] += -drift[i] * dt + noise[i];
            }
            let n = dot(&x, &x);
            if !n.is_finite() || n > ESCAPE_BLOWUP * ESCAPE_BLOWUP {
                return Err(Error::IntegrationUnstable { step });
            }
        }
        Ok(0.5 * h.quad_form(&x))
    })?;
    let (empirical_escape, std_error) = par::mean_and_std_error(&escapes);
    let predicted = 0.5 * t * h.trace_of_square();
    let rel_error = if predicted != 0.0 {
        (empirical_escape - predicted).abs() / predicted
    } else if empirical_escape == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok((EscapeReport { t, dt, n_steps, n_paths, seed, empirical_escape, std_error, predicted, rel_error }, escapes))
}

// ---------------------------------------------------------------------------
// minibatches

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinibatchReport {
    pub k: usize,
    pub per_batch_traces: Vec<f64>,
    pub per_batch_sc: Vec<f64>,
    pub full_trace: f64,
    pub full_sc: f64,
    pub trace_gap: f64,
    pub sc_gap: f64,
    pub full_hessian: SymMatrix,
}

/// Compares the curvature of the averaged Hessian with the averaged
/// curvatures of the batch Hessians (all at a common critical point).
pub fn minibatch_analysis(per_batch_hessians: &[SymMatrix]) -> Result<MinibatchReport> {
    let k = per_batch_hessians.len();
    if k < 2 {
        return Err(Error::invalid("need at least two batches"));
    }
    let q = per_batch_hessians[0].dim();
    if per_batch_hessians.iter().any(|h| h.dim() != q) {
        return Err(Error::invalid("batch Hessians have different dimensions"));
    }
    let full = per_batch_hessians
        .iter()
        .skip(1)
        .fold(per_batch_hessians[0].clone(), |acc, h| acc.add(h))
        .scaled(1.0 / k as f64);
    let per_batch_traces: Vec<f64> = per_batch_hessians.iter().map(SymMatrix::trace).collect();
    let per_batch_sc: Vec<f64> = per_batch_hessians.iter().map(scalar_curvature_at_min).collect();
    let full_trace = full.trace();
    let full_sc = scalar_curvature_at_min(&full);
    let mean = |v: &[f64]| par::ordered_sum(v) / v.len() as f64;
    Ok(MinibatchReport {
        k,
        trace_gap: (full_trace - mean(&per_batch_traces)).abs(),
        sc_gap: (full_sc - mean(&per_batch_sc)).abs(),
        per_batch_traces,
        per_batch_sc,
        full_trace,
        full_sc,
        full_hessian: full,
    })
}

// ---------------------------------------------------------------------------
// saddle grid

/// `count` evenly spaced values from `start` to `stop` inclusive; written
/// `start:stop:count` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Linspace {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        if !start.is_finite() || !stop.is_finite() {
            return Err(Error::invalid("range ends must be finite"));
        }
        if count == 0 {
            return Err(Error::invalid("range needs at least one point"));
        }
        Ok(Self { start, stop, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.stop } else { self.start + step * i as f64 })
            .collect()
    }
}

impl FromStr for Linspace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(Error::invalid(format!("expected start:stop:count, got {s:?}")));
        };
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad number {p:?} in {s:?}")));
        let count = n.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad count {n:?} in {s:?}")))?;
        Self::new(num(a)?, num(b)?, count)
    }
}

impl fmt::Display for Linspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleGridRecord {
    pub u: f64,
    pub v: f64,
    pub f: f64,
    pub trace_h: f64,
    pub sc: f64,
}

/// Value, Hessian trace and scalar curvature of `e^{-cu} sin u sin v` on a
/// grid, `u` varying slowest.
pub fn saddle_grid(c: f64, u: Linspace, v: Linspace) -> Result<Vec<SaddleGridRecord>> {
    let field = make_saddle_field(SaddleFieldParams { c })?;
    if u.count < 2 || v.count < 2 {
        return Err(Error::invalid("grid needs at least two nodes per axis"));
    }
    let us = u.values();
    let vs = v.values();
    let nv = vs.len();
    par::try_map_indexed(us.len() * nv, |idx| {
        let x = [us[idx / nv], vs[idx % nv]];
        let grad = eval_gradient(&field, &x)?;
        let hess = eval_hessian(&field, &x)?;
        Ok(SaddleGridRecord {
            u: x[0],
            v: x[1],
            f: field.value(&x),
            trace_h: hess.trace(),
            sc: scalar_curvature_from_derivatives(&grad, &hess),
        })
    })
}
