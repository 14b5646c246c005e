//! Volumes of small geodesic balls and the curvature read off their deficit
//! against Euclidean balls: `vol B_g(r) / vol B_e(r) = 1 − Sc r² / (6(q+2)) + O(r⁴)`.
//!
//! The volume is integrated in geodesic polar coordinates. For a unit
//! direction `θ` and a g-orthonormal frame `E` at the centre,
//!
//! ```text
//! vol = ∫_{S^{q-1}} ∫_0^r √det g(γ(t)) · |det[γ̇(t), J_1(t), …, J_{q-1}(t)]| dt dθ
//! ```
//!
//! where `γ` is the geodesic with initial velocity `Eθ` and `J_j` are
//! forward differences of geodesics started at `E(θ + δ e_j)`, `e_j ⊥ θ`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::geodesic::{integrate_geodesic, GeodesicOptions, Trajectory};
use crate::error::{Error, Result};
use crate::fields::{eval_gradient, ScalarField};
use crate::linalg::{dot, Matrix};
use crate::par;

/// How directions and radial integrals are discretised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Uniform angular grid size when `q = 2`; Monte Carlo sample count when `q ≥ 3`.
    pub directions: usize,
    pub seed: u64,
    /// Forward-difference step for the exponential-map Jacobian.
    pub jacobian_step: f64,
    pub geodesic: GeodesicOptions,
}

impl QuadratureSpec {
    /// 256 angles for surfaces, 4096 random directions above.
    pub fn default_for_dim(q: usize) -> Self {
        Self {
            directions: if q <= 2 { 256 } else { 4096 },
            seed: 0,
            jacobian_step: 1e-5,
            geodesic: GeodesicOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.directions == 0 {
            return Err(Error::invalid("quadrature needs at least one direction"));
        }
        if self.geodesic.steps < 2 || self.geodesic.steps % 2 != 0 {
            return Err(Error::invalid("radial Simpson rule needs an even number of steps"));
        }
        if !(self.jacobian_step > 0.0) {
            return Err(Error::invalid("jacobian step must be positive"));
        }
        Ok(())
    }
}

/// Volume of the unit ball in `ℝ^q`.
pub fn unit_ball_volume(q: usize) -> f64 {
    match q {
        0 => 1.0,
        1 => 2.0,
        _ => std::f64::consts::TAU / q as f64 * unit_ball_volume(q - 2),
    }
}

/// Area of the unit sphere `S^{q-1}`.
pub fn unit_sphere_area(q: usize) -> f64 {
    q as f64 * unit_ball_volume(q)
}

pub fn euclidean_ball_volume(q: usize, r: f64) -> f64 {
    unit_ball_volume(q) * r.powi(q as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallVolume {
    pub radius: f64,
    pub volume: f64,
    /// Monte Carlo standard error (zero for the deterministic grids).
    pub std_error: f64,
    pub euclidean_volume: f64,
    pub ratio: f64,
}

/// `g^{-1/2}` at a point with gradient `grad`; its columns are g-orthonormal.
fn inverse_sqrt_metric(grad: &[f64]) -> Matrix {
    let q = grad.len();
    let mut e = Matrix::identity(q);
    let n2 = dot(grad, grad);
    if n2 > 0.0 {
        let c = (1.0 - 1.0 / (1.0 + n2).sqrt()) / n2;
        for i in 0..q {
            for j in 0..q {
                e[(i, j)] -= c * grad[i] * grad[j];
            }
        }
    }
    e
}

/// Orthonormal basis of the complement of the unit vector `theta`.
fn complement_basis(theta: &[f64]) -> Vec<Vec<f64>> {
    let q = theta.len();
    let mut basis: Vec<Vec<f64>> = vec![theta.to_vec()];
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| theta[a].abs().total_cmp(&theta[b].abs()));
    for &i in &order {
        if basis.len() == q {
            break;
        }
        let mut v = vec![0.0; q];
        v[i] = 1.0;
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= p * bi);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|c| *c /= n);
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    let mut s = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    s * h / 3.0
}

/// Radial integral `∫_0^r ρ(t) dt` along one direction.
fn radial_integral<F: ScalarField + ?Sized>(
    field: &F,
    x: &[f64],
    frame: &Matrix,
    theta: &[f64],
    r: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let q = x.len();
    let delta = spec.jacobian_step;
    let main = integrate_geodesic(field, x, &frame.matvec(theta), r, spec.geodesic)?;
    let perturbed: Vec<Trajectory> = complement_basis(theta)
        .iter()
        .map(|e| {
            let w: Vec<f64> = theta.iter().zip(e).map(|(t, ej)| t + delta * ej).collect();
            integrate_geodesic(field, x, &frame.matvec(&w), r, spec.geodesic)
        })
        .collect::<Result<_>>()?;

    let density: Vec<f64> = (0..main.positions.len())
        .map(|n| {
            let mut cols = Matrix::zeros(q, q);
            for i in 0..q {
                cols[(i, 0)] = main.velocities[n][i];
            }
            for (j, p) in perturbed.iter().enumerate() {
                for i in 0..q {
                    cols[(i, j + 1)] = (p.positions[n][i] - main.positions[n][i]) / delta;
                }
            }
            (1.0 + main.grad_sq[n]).sqrt() * cols.determinant().abs()
        })
        .collect();
    Ok(simpson(&density, main.dt))
}

/// Riemannian volume of the geodesic ball of radius `r` around `x`.
pub fn geodesic_ball_volume<F: ScalarField + ?Sized>(
    field: &F,
    x: &[f64],
    r: f64,
    spec: &QuadratureSpec,
) -> Result<BallVolume> {
    spec.validate()?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!("radius must be positive, got {r}")));
    }
    let q = field.dim();
    let grad = eval_gradient(field, x)?;
    let frame = inverse_sqrt_metric(&grad);
    let euclidean = euclidean_ball_volume(q, r);

    let (volume, std_error) = match q {
        1 => {
            let plus = radial_integral(field, x, &frame, &[1.0], r, spec)?;
            let minus = radial_integral(field, x, &frame, &[-1.0], r, spec)?;
            (plus + minus, 0.0)
        }
        2 => {
            let n = spec.directions;
            let parts = par::try_map_indexed(n, |k| {
                let a = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
                radial_integral(field, x, &frame, &[a.cos(), a.sin()], r, spec)
            })?;
            (par::ordered_sum(&parts) * std::f64::consts::TAU / n as f64, 0.0)
        }
        _ => {
            let parts = par::try_map_indexed(spec.directions, |k| {
                let mut rng = par::stream_rng(spec.seed, k as u64);
                let mut theta: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = dot(&theta, &theta).sqrt();
                theta.iter_mut().for_each(|c| *c /= n);
                radial_integral(field, x, &frame, &theta, r, spec)
            })?;
            let (mean, se) = par::mean_and_std_error(&parts);
            let area = unit_sphere_area(q);
            (mean * area, se * area)
        }
    };
    Ok(BallVolume { radius: r, volume, std_error, euclidean_volume: euclidean, ratio: volume / euclidean })
}

/// Functional form fitted to `1 − vol_g / vol_e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeficitFitModel {
    /// `k r²`
    Quadratic,
    /// `k r² − m r⁴`; absorbs the next order of the expansion.
    #[default]
    QuadraticQuartic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeDeficitFit {
    pub model: DeficitFitModel,
    pub dim: usize,
    pub radii: Vec<f64>,
    pub volumes: Vec<BallVolume>,
    /// Leading deficit coefficient `k`.
    pub k: f64,
    /// `r⁴` coefficient (zero for the quadratic model).
    pub quartic: f64,
    /// `6 (q + 2) k`.
    pub sc_estimate: f64,
    pub residual_rms: f64,
    /// The fit residual is large compared to the deficits themselves.
    pub fit_warning: bool,
}

/// Fits the small-radius volume expansion and converts it to a curvature.
pub fn volume_deficit_coefficient<F: ScalarField + ?Sized>(
    field: &F,
    x: &[f64],
    radii: &[f64],
    spec: &QuadratureSpec,
    model: DeficitFitModel,
) -> Result<VolumeDeficitFit> {
    if radii.len() < 3 {
        return Err(Error::invalid("need at least three radii"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radii must be positive and strictly ascending"));
    }
    let volumes = radii
        .iter()
        .map(|&r| geodesic_ball_volume(field, x, r, spec))
        .collect::<Result<Vec<_>>>()?;
    let deficit: Vec<f64> = volumes.iter().map(|v| 1.0 - v.ratio).collect();

    let s = |p: i32| radii.iter().map(|r| r.powi(p)).sum::<f64>();
    let sy = |p: i32| radii.iter().zip(&deficit).map(|(r, y)| r.powi(p) * y).sum::<f64>();
    let (k, quartic) = match model {
        DeficitFitModel::Quadratic => (sy(2) / s(4), 0.0),
        DeficitFitModel::QuadraticQuartic => {
            // normal equations for y ≈ k r² − m r⁴
            let (a, b, c) = (s(4), -s(6), s(8));
            let (y1, y2) = (sy(2), -sy(4));
            let det = a * c - b * b;
            ((y1 * c - b * y2) / det, (a * y2 - b * y1) / det)
        }
    };
    let residuals: Vec<f64> = radii
        .iter()
        .zip(&deficit)
        .map(|(r, y)| y - (k * r * r - quartic * r.powi(4)))
        .collect();
    let rms = |v: &[f64]| (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt();
    let residual_rms = rms(&residuals);
    let q = field.dim();
    Ok(VolumeDeficitFit {
        model,
        dim: q,
        radii: radii.to_vec(),
        volumes,
        k,
        quartic,
        sc_estimate: 6.0 * (q as f64 + 2.0) * k,
        residual_rms,
        fit_warning: residual_rms > 0.05 * rms(&deficit).max(1e-12),
    })
}
