//! Geodesics of `g = I + ∇f ∇fᵀ`.
//!
//! With `Γ^i_kl = β f_i f_kl` the geodesic equation collapses to
//! `ẍ = −β (ẋᵀ H ẋ) ∇f`, so each right-hand side costs one gradient and one
//! Hessian-vector product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{check_point, ScalarField};
use crate::linalg::dot;

/// Fixed-step RK4 settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicOptions {
    pub steps: usize,
    /// Rescale the velocity back to its initial g-norm every this many steps
    /// (0 disables).
    pub renormalize_every: usize,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self { steps: 512, renormalize_every: 32 }
    }
}

/// Samples of a geodesic at the RK4 nodes `t_n = n · t_end / steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// `‖∇f‖²` at each node, so `det g = 1 + grad_sq`.
    pub grad_sq: Vec<f64>,
    /// Largest relative drift of `ẋᵀ g ẋ` seen before any renormalisation.
    pub max_norm_drift: f64,
}

impl Trajectory {
    pub fn end(&self) -> &[f64] {
        self.positions.last().expect("trajectory has at least one node")
    }
}

fn g_norm_sq(grad: &[f64], v: &[f64]) -> f64 {
    let p = dot(grad, v);
    dot(v, v) + p * p
}

fn acceleration<F: ScalarField + ?Sized>(field: &F, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grad = field.gradient(x);
    let hv = field.hvp(x, v);
    let s = dot(v, &hv) / (1.0 + dot(&grad, &grad));
    (grad.iter().map(|g| -s * g).collect(), grad)
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}

/// Integrates the geodesic from `(x, v)` over parameter time `t_end`.
///
/// `v` need not be unit length; the trajectory then covers arc length
/// `t_end · |v|_g`.
pub fn integrate_geodesic<F: ScalarField + ?Sized>(
    field: &F,
    x: &[f64],
    v: &[f64],
    t_end: f64,
    opts: GeodesicOptions,
) -> Result<Trajectory> {
    check_point(field, x)?;
    if v.len() != x.len() {
        return Err(Error::invalid("velocity and point dimensions differ"));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("integration length must be finite and non-negative, got {t_end}")));
    }
    if opts.steps == 0 {
        return Err(Error::invalid("geodesic integration needs at least one step"));
    }
    let dt = t_end / opts.steps as f64;
    let stalled = dot(v, v) > 0.0 && x.iter().zip(v).all(|(xi, vi)| xi + dt * vi == *xi);
    if t_end > 0.0 && (dt < f64::MIN_POSITIVE || stalled) {
        return Err(Error::GeodesicFailure(format!("step {dt:e} underflows at this scale")));
    }

    let mut pos = x.to_vec();
    let mut vel = v.to_vec();
    let (mut acc, mut grad) = acceleration(field, &pos, &vel);
    let target = g_norm_sq(&grad, &vel);
    let mut out = Trajectory {
        dt,
        positions: Vec::with_capacity(opts.steps + 1),
        velocities: Vec::with_capacity(opts.steps + 1),
        grad_sq: Vec::with_capacity(opts.steps + 1),
        max_norm_drift: 0.0,
    };
    out.positions.push(pos.clone());
    out.velocities.push(vel.clone());
    out.grad_sq.push(dot(&grad, &grad));

    if t_end == 0.0 {
        return Ok(out);
    }

    for step in 1..=opts.steps {
        let k1x = vel.clone();
        let k1v = acc;
        let x2 = axpy(&pos, 0.5 * dt, &k1x);
        let v2 = axpy(&vel, 0.5 * dt, &k1v);
        let (k2v, _) = acceleration(field, &x2, &v2);
        let k2x = v2;
        let x3 = axpy(&pos, 0.5 * dt, &k2x);
        let v3 = axpy(&vel, 0.5 * dt, &k2v);
        let (k3v, _) = acceleration(field, &x3, &v3);
        let k3x = v3;
        let x4 = axpy(&pos, dt, &k3x);
        let v4 = axpy(&vel, dt, &k3v);
        let (k4v, _) = acceleration(field, &x4, &v4);
        let k4x = v4;
        for i in 0..pos.len() {
            pos[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            vel[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        if pos.iter().chain(&vel).any(|c| !c.is_finite()) {
            return Err(Error::GeodesicFailure(format!("non-finite state after step {step}")));
        }

        let (a, g) = acceleration(field, &pos, &vel);
        acc = a;
        grad = g;
        if grad.iter().any(|c| !c.is_finite()) {
            return Err(Error::GeodesicFailure(format!("non-finite gradient after step {step}")));
        }
        if target > 0.0 {
            let n2 = g_norm_sq(&grad, &vel);
            out.max_norm_drift = out.max_norm_drift.max((n2 / target - 1.0).abs());
            if opts.renormalize_every > 0 && step % opts.renormalize_every == 0 {
                let s = (target / n2).sqrt();
                vel.iter_mut().for_each(|c| *c *= s);
                acc.iter_mut().for_each(|c| *c *= s * s);
            }
        }
        out.positions.push(pos.clone());
        out.velocities.push(vel.clone());
        out.grad_sq.push(dot(&grad, &grad));
    }
    Ok(out)
}

/// `exp_x(r v)` for a unit g-norm direction `v`.
pub fn exp_map<F: ScalarField + ?Sized>(field: &F, x: &[f64], v: &[f64], r: f64) -> Result<Vec<f64>> {
    check_point(field, x)?;
    if v.len() != x.len() {
        return Err(Error::invalid("direction and point dimensions differ"));
    }
    let grad = field.gradient(x);
    let n2 = g_norm_sq(&grad, v);
    if (n2 - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!("direction must have unit g-norm, has squared norm {n2}")));
    }
    if r == 0.0 {
        return Ok(x.to_vec());
    }
    let traj = integrate_geodesic(field, x, v, r, GeodesicOptions::default())?;
    Ok(traj.end().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{paraboloid, LinearField, TrigField};
    use crate::geometry::metric_at;

    /// Arc length of the profile curve `(ρ, ρ²/2)` from the apex.
    fn profile_arc_length(rho: f64) -> f64 {
        0.5 * (rho * (1.0 + rho * rho).sqrt() + rho.asinh())
    }

    #[test]
    fn flat_field_gives_straight_lines() {
        let f = LinearField::constant(3, 1.0);
        let x = [0.5, -1.0, 2.0];
        let v = [0.6, 0.0, 0.8];
        let y = exp_map(&f, &x, &v, 1.7).unwrap();
        for i in 0..3 {
            assert!((y[i] - (x[i] + 1.7 * v[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_radius_is_identity() {
        let f = paraboloid(2);
        assert_eq!(exp_map(&f, &[0.3, 0.4], &[1.0 / (1.0f64 + 0.09).sqrt(), 0.0], 0.0).unwrap(), vec![0.3, 0.4]);
    }

    #[test]
    fn rejects_non_unit_direction() {
        let f = paraboloid(2);
        assert!(matches!(exp_map(&f, &[0.0, 0.0], &[2.0, 0.0], 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn paraboloid_meridians_have_correct_arc_length() {
        let f = paraboloid(2);
        for &r in &[0.1, 0.5, 1.0, 2.0] {
            for k in 0..8 {
                let th = k as f64 * std::f64::consts::TAU / 8.0;
                let v = [th.cos(), th.sin()];
                let y = exp_map(&f, &[0.0, 0.0], &v, r).unwrap();
                let rho = (y[0] * y[0] + y[1] * y[1]).sqrt();
                assert!((profile_arc_length(rho) - r).abs() < 1e-6, "r={r}");
                // meridians keep their direction
                assert!((y[0] * v[1] - y[1] * v[0]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn velocity_norm_is_conserved() {
        let f = TrigField::random(3, 3, 21);
        let x = [0.2, -0.3, 0.1];
        let m = metric_at(&f, &x).unwrap();
        let raw = [0.3, 0.5, -0.2];
        let s = m.norm_sq(&raw).sqrt();
        let v: Vec<f64> = raw.iter().map(|c| c / s).collect();
        let t = integrate_geodesic(&f, &x, &v, 1.0, GeodesicOptions { steps: 512, renormalize_every: 0 }).unwrap();
        assert!(t.max_norm_drift < 1e-6, "{}", t.max_norm_drift);
    }

    #[test]
    fn step_underflow_is_reported() {
        let f = paraboloid(2);
        let r = integrate_geodesic(&f, &[1.0, 0.0], &[0.5, 0.0], 1e-300, GeodesicOptions::default());
        assert!(matches!(r, Err(Error::GeodesicFailure(_))), "{r:?}");
    }
}
