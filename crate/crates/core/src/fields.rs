//! Scalar fields over parameter space.
//!
//! A [`ScalarField`] is the loss function `f: ℝ^q → ℝ` whose graph we study.
//! Fields report which derivatives they evaluate exactly; anything missing is
//! filled in by finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, SymMatrix};
use crate::par;

pub type ParamPoint = Vec<f64>;

/// Which derivatives a field evaluates in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub exact_grad: bool,
    pub exact_hess: bool,
    pub exact_hvp: bool,
}

impl Capabilities {
    pub const ANALYTIC: Capabilities =
        Capabilities { exact_grad: true, exact_hess: true, exact_hvp: true };
    pub const GRADIENT_ONLY: Capabilities =
        Capabilities { exact_grad: true, exact_hess: false, exact_hvp: false };
    pub const VALUE_ONLY: Capabilities =
        Capabilities { exact_grad: false, exact_hess: false, exact_hvp: false };
}

/// A `q`-dimensional differentiable function.
///
/// Only `dim`, `value` and `capabilities` are required. Missing derivatives
/// fall back to central differences: gradients from values, Hessians from
/// gradients, Hessian-vector products from one gradient difference along `v`.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn capabilities(&self) -> Capabilities;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        fd_gradient_unchecked(self, x, None)
    }

    fn hessian(&self, x: &[f64]) -> SymMatrix {
        hessian_from_gradient(self, x)
    }

    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        if self.capabilities().exact_hess {
            self.hessian(x).matvec(v)
        } else {
            hvp_from_gradient(self, x, v)
        }
    }

    /// `false` for fields with kinks (ReLU networks); curvature there is only
    /// meaningful away from the non-smooth set.
    fn is_smooth(&self) -> bool {
        true
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> SymMatrix {
        (**self).hessian(x)
    }
    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        (**self).hvp(x, v)
    }
    fn is_smooth(&self) -> bool {
        (**self).is_smooth()
    }
}

pub(crate) fn check_point<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<()> {
    if x.len() != field.dim() {
        return Err(Error::invalid(format!(
            "point has {} coordinates, field expects {}",
            x.len(),
            field.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("point has non-finite coordinates"));
    }
    Ok(())
}

/// Gradient with a finiteness check.
pub fn eval_gradient<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<Vec<f64>> {
    check_point(field, x)?;
    let g = field.gradient(x);
    if g.len() != field.dim() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure(format!("non-finite gradient at {x:?}")));
    }
    Ok(g)
}

/// Hessian with a finiteness check.
pub fn eval_hessian<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<SymMatrix> {
    check_point(field, x)?;
    let h = field.hessian(x);
    if h.dim() != field.dim() || !h.is_finite() {
        return Err(Error::EvaluationFailure(format!("non-finite Hessian at {x:?}")));
    }
    Ok(h)
}

pub fn eval_value<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<f64> {
    check_point(field, x)?;
    let v = field.value(x);
    if !v.is_finite() {
        return Err(Error::EvaluationFailure(format!("non-finite value at {x:?}")));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// finite differences

/// `ε^{1/3} max(1, |x_i|)`.
pub fn gradient_step(xi: f64) -> f64 {
    f64::EPSILON.cbrt() * xi.abs().max(1.0)
}

/// `ε^{1/4} max(1, |x_i|)`.
pub fn hessian_step(xi: f64) -> f64 {
    f64::EPSILON.powf(0.25) * xi.abs().max(1.0)
}

fn shifted(x: &[f64], i: usize, d: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += d;
    y
}

fn fd_gradient_unchecked<F: ScalarField + ?Sized>(field: &F, x: &[f64], h: Option<f64>) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let hi = h.unwrap_or_else(|| gradient_step(x[i]));
            (field.value(&shifted(x, i, hi)) - field.value(&shifted(x, i, -hi))) / (2.0 * hi)
        })
        .collect()
}

/// Central-difference gradient. `h = None` picks a per-coordinate step.
pub fn finite_diff_gradient<F: ScalarField + ?Sized>(
    field: &F,
    x: &[f64],
    h: Option<f64>,
) -> Result<Vec<f64>> {
    check_point(field, x)?;
    if let Some(h) = h {
        if !(h > 0.0) {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
    }
    let g = fd_gradient_unchecked(field, x, h);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure(format!("non-finite values near {x:?}")));
    }
    Ok(g)
}

/// Central second differences of values, symmetric by construction.
pub fn finite_diff_hessian<F: ScalarField + ?Sized>(
    field: &F,
    x: &[f64],
    h: Option<f64>,
) -> Result<SymMatrix> {
    check_point(field, x)?;
    if let Some(h) = h {
        if !(h > 0.0) {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
    }
    let q = x.len();
    let steps: Vec<f64> = x.iter().map(|&xi| h.unwrap_or_else(|| hessian_step(xi))).collect();
    let f0 = field.value(x);
    let mut hess = SymMatrix::zeros(q);
    for i in 0..q {
        let hi = steps[i];
        let fp = field.value(&shifted(x, i, hi));
        let fm = field.value(&shifted(x, i, -hi));
        hess.set(i, i, (fp - 2.0 * f0 + fm) / (hi * hi));
        for j in i + 1..q {
            let hj = steps[j];
            let at = |si: f64, sj: f64| {
                let mut y = x.to_vec();
                y[i] += si * hi;
                y[j] += sj * hj;
                field.value(&y)
            };
            let v = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * hi * hj);
            hess.set(i, j, v);
        }
    }
    if !hess.is_finite() {
        return Err(Error::EvaluationFailure(format!("non-finite values near {x:?}")));
    }
    Ok(hess)
}

/// Hessian assembled column by column from central differences of the
/// gradient, then symmetrised. Columns are evaluated in parallel.
pub fn hessian_from_gradient<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> SymMatrix {
    let q = x.len();
    let cols: Vec<Vec<f64>> = par::map_indexed(q, |j| {
        let h = gradient_step(x[j]);
        let gp = field.gradient(&shifted(x, j, h));
        let gm = field.gradient(&shifted(x, j, -h));
        gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    });
    SymMatrix::from_upper_fn(q, |i, j| 0.5 * (cols[j][i] + cols[i][j]))
}

/// `H v ≈ (∇f(x + h v) − ∇f(x − h v)) / 2h` with `h = 1e-5 (1 + ‖x‖) / ‖v‖`.
pub fn hvp_from_gradient<F: ScalarField + ?Sized>(field: &F, x: &[f64], v: &[f64]) -> Vec<f64> {
    let vn = dot(v, v).sqrt();
    if vn == 0.0 {
        return vec![0.0; x.len()];
    }
    let h = 1e-5 * (1.0 + dot(x, x).sqrt()) / (vn + f64::MIN_POSITIVE);
    let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
    let gp = field.gradient(&xp);
    let gm = field.gradient(&xm);
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

// ---------------------------------------------------------------------------
// built-in fields

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleFieldParams {
    pub c: f64,
}

/// `f(u, v) = e^{-cu} sin(u) sin(v)`: a damped egg-crate surface whose
/// saddles have zero Hessian trace but negative curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleField {
    c: f64,
}

pub fn make_saddle_field(p: SaddleFieldParams) -> Result<SaddleField> {
    if !(p.c > 0.0) || !p.c.is_finite() {
        return Err(Error::invalid(format!("decay constant c must be positive, got {}", p.c)));
    }
    Ok(SaddleField { c: p.c })
}

/// Closed-form first and second derivatives of the saddle field at `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SaddleDerivs {
    f: f64,
    fu: f64,
    fv: f64,
    fuu: f64,
    fuv: f64,
    fvv: f64,
}

fn saddle_derivs(u: f64, v: f64, c: f64) -> SaddleDerivs {
    let e = (-c * u).exp();
    let (su, cu) = u.sin_cos();
    let (sv, cv) = v.sin_cos();
    SaddleDerivs {
        f: e * su * sv,
        fu: e * (cu - c * su) * sv,
        fv: e * su * cv,
        fuu: e * ((c * c - 1.0) * su - 2.0 * c * cu) * sv,
        fuv: e * (cu - c * su) * cv,
        fvv: -e * su * sv,
    }
}

impl SaddleField {
    pub fn c(&self) -> f64 {
        self.c
    }
}

impl ScalarField for SaddleField {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        (-self.c * x[0]).exp() * x[0].sin() * x[1].sin()
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ANALYTIC
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = saddle_derivs(x[0], x[1], self.c);
        vec![d.fu, d.fv]
    }
    fn hessian(&self, x: &[f64]) -> SymMatrix {
        let d = saddle_derivs(x[0], x[1], self.c);
        let mut h = SymMatrix::zeros(2);
        h.set(0, 0, d.fuu);
        h.set(0, 1, d.fuv);
        h.set(1, 1, d.fvv);
        h
    }
    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.hessian(x).matvec(v)
    }
}

/// Trace of the Hessian and scalar curvature of the saddle field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleAnalytics {
    pub value: f64,
    pub trace: f64,
    pub scalar_curvature: f64,
}

/// Closed forms for the saddle field.
///
/// `tr H = e^{-cu} ((c² − 2) sin u − 2c cos u) sin v`, and since the graph is
/// a surface, `Sc = 2K = 2 (f_uu f_vv − f_uv²) / (1 + f_u² + f_v²)²`.
pub fn saddle_analytics(u: f64, v: f64, c: f64) -> SaddleAnalytics {
    let e = (-c * u).exp();
    let (su, cu) = u.sin_cos();
    let trace = e * ((c * c - 2.0) * su - 2.0 * c * cu) * v.sin();
    let d = saddle_derivs(u, v, c);
    let w = 1.0 + d.fu * d.fu + d.fv * d.fv;
    let scalar_curvature = 2.0 * (d.fuu * d.fvv - d.fuv * d.fuv) / (w * w);
    SaddleAnalytics { value: d.f, trace, scalar_curvature }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFieldParams {
    pub a: SymMatrix,
    pub center: ParamPoint,
}

/// `f(x) = ½ (x − c)ᵀ A (x − c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticField {
    a: SymMatrix,
    center: ParamPoint,
}

pub fn make_quadratic_field(p: QuadraticFieldParams) -> Result<QuadraticField> {
    if p.a.dim() != p.center.len() {
        return Err(Error::invalid(format!(
            "matrix is {}x{} but center has {} coordinates",
            p.a.dim(),
            p.a.dim(),
            p.center.len()
        )));
    }
    if !p.a.is_finite() || p.center.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("quadratic field parameters must be finite"));
    }
    Ok(QuadraticField { a: p.a, center: p.center })
}

/// `½‖x‖²` in `q` dimensions; its graph is a paraboloid of revolution.
pub fn paraboloid(q: usize) -> QuadraticField {
    QuadraticField { a: SymMatrix::identity(q), center: vec![0.0; q] }
}

impl QuadraticField {
    pub fn matrix(&self) -> &SymMatrix {
        &self.a
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    fn offset(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, b)| a - b).collect()
    }
}

impl ScalarField for QuadraticField {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.a.quad_form(&self.offset(x))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ANALYTIC
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(&self.offset(x))
    }
    fn hessian(&self, _x: &[f64]) -> SymMatrix {
        self.a.clone()
    }
    fn hvp(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.a.matvec(v)
    }
}

/// `f(x) = bᵀx + offset`. With `b = 0` this is the flat field.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    b: Vec<f64>,
    offset: f64,
}

impl LinearField {
    pub fn new(b: Vec<f64>, offset: f64) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::invalid("linear field needs at least one coordinate"));
        }
        Ok(Self { b, offset })
    }

    pub fn constant(q: usize, value: f64) -> Self {
        Self { b: vec![0.0; q.max(1)], offset: value }
    }
}

impl ScalarField for LinearField {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.b, x) + self.offset
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ANALYTIC
    }
    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.b.clone()
    }
    fn hessian(&self, _x: &[f64]) -> SymMatrix {
        SymMatrix::zeros(self.b.len())
    }
    fn hvp(&self, _x: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![0.0; self.b.len()]
    }
}

/// Smooth test family with position-dependent Hessian:
/// `f(x) = ½ xᵀAx + bᵀx + Σ_k α_k sin(w_kᵀx + φ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    a: SymMatrix,
    b: Vec<f64>,
    terms: Vec<TrigTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub freq: Vec<f64>,
    pub phase: f64,
}

impl TrigField {
    pub fn new(a: SymMatrix, b: Vec<f64>, terms: Vec<TrigTerm>) -> Result<Self> {
        let q = a.dim();
        if b.len() != q || terms.iter().any(|t| t.freq.len() != q) {
            return Err(Error::invalid("trig field components must share one dimension"));
        }
        Ok(Self { a, b, terms })
    }

    /// Random member of the family; entries are O(1).
    pub fn random(q: usize, n_terms: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = SymMatrix::from_upper_fn(q, |_, _| rng.random_range(-1.0..1.0));
        let b = (0..q).map(|_| rng.random_range(-0.5..0.5)).collect();
        let terms = (0..n_terms)
            .map(|_| TrigTerm {
                amplitude: rng.random_range(-1.0..1.0),
                freq: (0..q).map(|_| rng.random_range(-1.5..1.5)).collect(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        Self { a, b, terms }
    }
}

impl ScalarField for TrigField {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut f = 0.5 * self.a.quad_form(x) + dot(&self.b, x);
        for t in &self.terms {
            f += t.amplitude * (dot(&t.freq, x) + t.phase).sin();
        }
        f
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ANALYTIC
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.a.matvec(x);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi += bi;
        }
        for t in &self.terms {
            let c = t.amplitude * (dot(&t.freq, x) + t.phase).cos();
            for (gi, wi) in g.iter_mut().zip(&t.freq) {
                *gi += c * wi;
            }
        }
        g
    }
    fn hessian(&self, x: &[f64]) -> SymMatrix {
        let mut h = self.a.clone();
        for t in &self.terms {
            let s = t.amplitude * (dot(&t.freq, x) + t.phase).sin();
            h = h.sub(&SymMatrix::outer(&t.freq).scaled(s));
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        d / dot(b, b).sqrt().max(1.0)
    }

    /// Field with only `value`, to exercise the trait defaults.
    struct ValueOnly<F>(F);
    impl<F: ScalarField> ScalarField for ValueOnly<F> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn value(&self, x: &[f64]) -> f64 {
            self.0.value(x)
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities::VALUE_ONLY
        }
    }

    #[test]
    fn saddle_values() {
        let f = make_saddle_field(SaddleFieldParams { c: 0.1 }).unwrap();
        assert_eq!(f.value(&[0.0, FRAC_PI_2]), 0.0);
        let expected = (-0.1 * FRAC_PI_2).exp();
        assert!((f.value(&[FRAC_PI_2, FRAC_PI_2]) - expected).abs() < 1e-15);
    }

    #[test]
    fn saddle_rejects_non_positive_c() {
        assert!(make_saddle_field(SaddleFieldParams { c: 0.0 }).is_err());
        assert!(make_saddle_field(SaddleFieldParams { c: -1.0 }).is_err());
    }

    #[test]
    fn saddle_fvv_matches_central_differences() {
        let f = make_saddle_field(SaddleFieldParams { c: 0.1 }).unwrap();
        let x = [FRAC_PI_2, FRAC_PI_2];
        let h = 1e-5;
        let fd = (f.value(&[x[0], x[1] + h]) - 2.0 * f.value(&x) + f.value(&[x[0], x[1] - h])) / (h * h);
        let exact = -(-0.1 * FRAC_PI_2).exp();
        assert!((fd - exact).abs() < 1e-5, "fd {fd} vs {exact}");
        assert!((f.hessian(&x).get(1, 1) - exact).abs() < 1e-15);
    }

    #[test]
    fn saddle_periodic_in_v() {
        let f = make_saddle_field(SaddleFieldParams { c: 0.3 }).unwrap();
        for &(u, v) in &[(0.3, 0.7), (2.0, -1.0), (5.5, 3.3)] {
            let a = f.value(&[u, v]);
            let b = f.value(&[u, v + 2.0 * PI]);
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn quadratic_basics() {
        let f = make_quadratic_field(QuadraticFieldParams {
            a: SymMatrix::identity(2),
            center: vec![0.0, 0.0],
        })
        .unwrap();
        assert_eq!(f.value(&[3.0, 4.0]), 12.5);
        assert_eq!(f.gradient(&[3.0, 4.0]), vec![3.0, 4.0]);

        let a = SymMatrix::from_diag(&[1.0, 2.0]);
        let f = make_quadratic_field(QuadraticFieldParams { a: a.clone(), center: vec![0.0; 2] }).unwrap();
        assert_eq!(f.value(&[1.0, 1.0]), 1.5);
        assert_eq!(f.hessian(&[7.0, -3.0]), a);
    }

    #[test]
    fn quadratic_dim_mismatch() {
        let r = make_quadratic_field(QuadraticFieldParams {
            a: SymMatrix::identity(3),
            center: vec![0.0; 2],
        });
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fd_gradient_cases() {
        let f = paraboloid(2);
        let g = finite_diff_gradient(&f, &[1.0, 2.0], Some(1e-5)).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);

        let s = make_saddle_field(SaddleFieldParams { c: 0.1 }).unwrap();
        let x = [0.3, 0.7];
        let g = finite_diff_gradient(&s, &x, None).unwrap();
        let exact = s.gradient(&x);
        assert!(g.iter().zip(&exact).all(|(a, b)| (a - b).abs() < 1e-7));

        let c = LinearField::constant(3, 4.2);
        assert_eq!(finite_diff_gradient(&c, &[0.1, 0.2, 0.3], None).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn fd_gradient_rejects_bad_step() {
        assert!(finite_diff_gradient(&paraboloid(2), &[0.0, 0.0], Some(0.0)).is_err());
    }

    #[test]
    fn fd_reports_non_finite() {
        struct Blowup;
        impl ScalarField for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &[f64]) -> f64 {
                1.0 / x[0]
            }
            fn capabilities(&self) -> Capabilities {
                Capabilities::VALUE_ONLY
            }
        }
        let r = finite_diff_gradient(&Blowup, &[0.0], Some(1e-300));
        assert!(matches!(r, Err(Error::EvaluationFailure(_))), "{r:?}");
    }

    #[test]
    fn fd_hessian_cases() {
        let a = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let f = make_quadratic_field(QuadraticFieldParams { a: a.clone(), center: vec![0.2, -0.1] }).unwrap();
        let h = finite_diff_hessian(&f, &[0.3, 0.4], None).unwrap();
        assert!(h.sub(&a).frobenius_norm() <= 1e-6 * a.frobenius_norm());

        let s = make_saddle_field(SaddleFieldParams { c: 0.1 }).unwrap();
        let x = [0.3, 0.7];
        let h = finite_diff_hessian(&s, &x, None).unwrap();
        assert!(h.max_abs_diff(&s.hessian(&x)) < 1e-5);

        let l = LinearField::new(vec![1.0, -2.0, 0.5], 0.0).unwrap();
        let h = finite_diff_hessian(&l, &[0.4, 0.1, -0.3], None).unwrap();
        assert!(h.frobenius_norm() < 1e-6);
    }

    #[test]
    fn saddle_trace_at_origin_is_zero() {
        let s = saddle_analytics(0.0, 0.0, 0.1);
        assert_eq!(s.trace, 0.0);
        let f = make_saddle_field(SaddleFieldParams { c: 0.1 }).unwrap();
        assert_eq!(f.value(&[0.0, 0.0]), 0.0);
        assert!(f.gradient(&[0.0, 0.0]).iter().all(|g| g.abs() < 1e-15));
        let fd = finite_diff_hessian(&f, &[0.0, 0.0], None).unwrap();
        assert!(fd.trace().abs() < 1e-7);
    }

    #[test]
    fn saddle_trace_small_c_limit() {
        let c = 1e-8;
        let s = saddle_analytics(FRAC_PI_2, FRAC_PI_2, c);
        assert!((s.trace + 2.0 * s.value).abs() < 1e-7);
        let f = make_saddle_field(SaddleFieldParams { c }).unwrap();
        let fd = finite_diff_hessian(&f, &[FRAC_PI_2, FRAC_PI_2], None).unwrap();
        assert!((fd.trace() + 2.0).abs() < 1e-6);
    }

    #[test]
    fn saddle_trace_matches_fd_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let u = rng.random_range(-1.0..6.0);
            let v = rng.random_range(-3.0..3.0);
            let c = rng.random_range(0.01..1.0);
            let f = make_saddle_field(SaddleFieldParams { c }).unwrap();
            let fd = finite_diff_hessian(&f, &[u, v], None).unwrap();
            assert!((saddle_analytics(u, v, c).trace - fd.trace()).abs() < 1e-6);
        }
    }

    #[test]
    fn exact_fields_agree_with_finite_differences() {
        let mut fields: Vec<Box<dyn ScalarField>> = vec![
            Box::new(make_saddle_field(SaddleFieldParams { c: 0.1 }).unwrap()),
            Box::new(paraboloid(3)),
            Box::new(LinearField::new(vec![0.3, -0.2], 1.0).unwrap()),
        ];
        for q in 1..=4 {
            fields.push(Box::new(TrigField::random(q, 3, q as u64)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for field in &fields {
            for _ in 0..100 {
                let x: Vec<f64> = (0..field.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let g = field.gradient(&x);
                let gfd = finite_diff_gradient(field, &x, None).unwrap();
                assert!(rel_err(&gfd, &g) <= 1e-6);
                let h = field.hessian(&x);
                let hfd = finite_diff_hessian(field, &x, None).unwrap();
                assert!(hfd.sub(&h).frobenius_norm() <= 1e-6 * h.frobenius_norm().max(1.0));
            }
        }
    }

    #[test]
    fn hvp_reconstructs_hessian_columns() {
        let f = TrigField::random(4, 3, 9);
        let x = [0.1, -0.4, 0.8, 0.3];
        let h = f.hessian(&x);
        for i in 0..4 {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            let col = f.hvp(&x, &e);
            for r in 0..4 {
                assert!((col[r] - h.get(r, i)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn trait_defaults_fall_back_to_differences() {
        let inner = TrigField::random(3, 2, 4);
        let f = ValueOnly(inner.clone());
        let x = [0.2, -0.5, 0.7];
        assert!(rel_err(&f.gradient(&x), &inner.gradient(&x)) < 1e-8);
        let h = f.hessian(&x);
        assert!(h.max_abs_diff(&inner.hessian(&x)) < 1e-4);
        let v = [0.3, 0.1, -0.2];
        assert!(rel_err(&f.hvp(&x, &v), &inner.hessian(&x).matvec(&v)) < 1e-4);
    }
}
