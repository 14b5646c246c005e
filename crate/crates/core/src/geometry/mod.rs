//! Intrinsic geometry of the graph `{(x, f(x))}` pulled back to parameter
//! space, where the metric is `g = I + ∇f ∇fᵀ`.
//!
//! Everything here is a closed form in `∇f` and `H = ∇²f`:
//!
//! ```text
//! β          = 1 / (1 + ‖∇f‖²)
//! g⁻¹        = I − β ∇f ∇fᵀ
//! Γ^i_kl     = β f_i f_kl
//! R^i_jkm    = β (f_ik f_jm − f_im f_jk) − β² f_i f_r (f_rk f_jm − f_rm f_jk)
//! Ric_ab     = β (tr H · H − H²)_ab − β² ((∇fᵀH∇f) H_ab − (H∇f)_a (H∇f)_b)
//! Sc         = β (tr(H)² − tr(H²)) + 2β² ∇fᵀ(H² − tr(H) H)∇f
//! ```
//!
//! The lowered tensor `R_ijkm = β (f_ik f_jm − f_im f_jk)` is the Gauss
//! equation for the graph hypersurface; the curvature sign convention makes
//! spheres positive and saddles negative.

mod geodesic;
mod volume;

pub use geodesic::{exp_map, integrate_geodesic, GeodesicOptions, Trajectory};
pub use volume::{
    euclidean_ball_volume, geodesic_ball_volume, unit_sphere_area, volume_deficit_coefficient,
    BallVolume, DeficitFitModel, QuadratureSpec, VolumeDeficitFit,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{eval_gradient, eval_hessian, eval_value, ScalarField};
use crate::linalg::{dot, matrix_norms, psd_tolerance, eig_sym, Matrix, SymMatrix};

/// Metric quantities at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAtPoint {
    pub g: SymMatrix,
    pub g_inv: SymMatrix,
    pub beta: f64,
    pub det_g: f64,
    pub grad: Vec<f64>,
}

impl MetricAtPoint {
    pub fn from_gradient(grad: Vec<f64>) -> Self {
        let q = grad.len();
        let grad_sq = dot(&grad, &grad);
        let beta = 1.0 / (1.0 + grad_sq);
        let outer = SymMatrix::outer(&grad);
        let g = SymMatrix::identity(q).add(&outer);
        let g_inv = SymMatrix::identity(q).sub(&outer.scaled(beta));
        Self { g, g_inv, beta, det_g: 1.0 + grad_sq, grad }
    }

    /// `vᵀ g v = ‖v‖² + (∇f·v)²`.
    pub fn norm_sq(&self, v: &[f64]) -> f64 {
        let p = dot(&self.grad, v);
        dot(v, v) + p * p
    }
}

pub fn metric_at<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<MetricAtPoint> {
    Ok(MetricAtPoint::from_gradient(eval_gradient(field, x)?))
}

/// `Γ[i][k][l] = Γ^i_{kl}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChristoffelTensor {
    dim: usize,
    data: Vec<f64>,
}

impl ChristoffelTensor {
    pub fn from_derivatives(grad: &[f64], hess: &SymMatrix) -> Self {
        let q = grad.len();
        let beta = 1.0 / (1.0 + dot(grad, grad));
        let mut data = vec![0.0; q * q * q];
        for i in 0..q {
            let s = beta * grad[i];
            for k in 0..q {
                for l in 0..q {
                    data[(i * q + k) * q + l] = s * hess.get(k, l);
                }
            }
        }
        Self { dim: q, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize, l: usize) -> f64 {
        self.data[(i * self.dim + k) * self.dim + l]
    }

    /// `Γ^i_{ki}` summed over `i`.
    pub fn contraction(&self) -> Vec<f64> {
        (0..self.dim).map(|k| (0..self.dim).map(|i| self.get(i, k, i)).sum()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn christoffel_at<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<ChristoffelTensor> {
    let grad = eval_gradient(field, x)?;
    let hess = eval_hessian(field, x)?;
    Ok(ChristoffelTensor::from_derivatives(&grad, &hess))
}

/// `Γ^i_{ki} = β (H∇f)_k = ∂_k ln √det g`.
pub fn christoffel_contraction<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<Vec<f64>> {
    let grad = eval_gradient(field, x)?;
    let hess = eval_hessian(field, x)?;
    let beta = 1.0 / (1.0 + dot(&grad, &grad));
    Ok(hess.matvec(&grad).into_iter().map(|v| beta * v).collect())
}

/// `R[i][j][k][m] = R^i_{jkm}`, antisymmetric in `(k, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiemannTensor {
    dim: usize,
    data: Vec<f64>,
}

/// Largest violations of the algebraic Riemann symmetries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiemannSymmetry {
    /// `max |R^i_jkm + R^i_jmk|`
    pub antisymmetry: f64,
    /// `max |R_ijkm − R_kmij|` after lowering with `g`
    pub pair_symmetry: f64,
    /// `max |R_ijkm + R_ikmj + R_imjk|`
    pub bianchi: f64,
}

impl RiemannTensor {
    pub fn from_derivatives(grad: &[f64], hess: &SymMatrix) -> Self {
        let q = grad.len();
        let beta = 1.0 / (1.0 + dot(grad, grad));
        // lowered Gauss-equation tensor L_ajkm = β (f_ak f_jm − f_am f_jk)
        let lowered = |a: usize, j: usize, k: usize, m: usize| {
            beta * (hess.get(a, k) * hess.get(j, m) - hess.get(a, m) * hess.get(j, k))
        };
        let mut data = vec![0.0; q * q * q * q];
        for i in 0..q {
            for j in 0..q {
                for k in 0..q {
                    for m in 0..q {
                        // raise the first index with g⁻¹ = I − β ∇f ∇fᵀ
                        let mut contracted = 0.0;
                        for r in 0..q {
                            contracted += grad[r] * lowered(r, j, k, m);
                        }
                        data[((i * q + j) * q + k) * q + m] =
                            lowered(i, j, k, m) - beta * grad[i] * contracted;
                    }
                }
            }
        }
        Self { dim: q, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, m: usize) -> f64 {
        let q = self.dim;
        self.data[((i * q + j) * q + k) * q + m]
    }

    /// `R_ijkm = g_ia R^a_jkm`.
    pub fn lowered(&self, g: &SymMatrix) -> Vec<f64> {
        let q = self.dim;
        let mut out = vec![0.0; q * q * q * q];
        for i in 0..q {
            for j in 0..q {
                for k in 0..q {
                    for m in 0..q {
                        out[((i * q + j) * q + k) * q + m] =
                            (0..q).map(|a| g.get(i, a) * self.get(a, j, k, m)).sum();
                    }
                }
            }
        }
        out
    }

    /// Ricci tensor `R_jm = R^k_{jkm}`.
    pub fn ricci(&self) -> SymMatrix {
        let q = self.dim;
        let raw: Vec<f64> = (0..q * q)
            .map(|jm| {
                let (j, m) = (jm / q, jm % q);
                (0..q).map(|k| self.get(k, j, k, m)).sum()
            })
            .collect();
        SymMatrix::symmetrize_from(q, &raw).expect("square by construction")
    }

    pub fn symmetry_residuals(&self, g: &SymMatrix) -> RiemannSymmetry {
        let q = self.dim;
        let low = self.lowered(g);
        let at = |i: usize, j: usize, k: usize, m: usize| low[((i * q + j) * q + k) * q + m];
        let mut s = RiemannSymmetry { antisymmetry: 0.0, pair_symmetry: 0.0, bianchi: 0.0 };
        for i in 0..q {
            for j in 0..q {
                for k in 0..q {
                    for m in 0..q {
                        s.antisymmetry =
                            s.antisymmetry.max((self.get(i, j, k, m) + self.get(i, j, m, k)).abs());
                        s.pair_symmetry = s.pair_symmetry.max((at(i, j, k, m) - at(k, m, i, j)).abs());
                        s.bianchi = s
                            .bianchi
                            .max((at(i, j, k, m) + at(i, k, m, j) + at(i, m, j, k)).abs());
                    }
                }
            }
        }
        s
    }
}

pub fn riemann_at<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<RiemannTensor> {
    let grad = eval_gradient(field, x)?;
    let hess = eval_hessian(field, x)?;
    Ok(RiemannTensor::from_derivatives(&grad, &hess))
}

/// Ricci tensor from the contracted closed form.
pub fn ricci_from_derivatives(grad: &[f64], hess: &SymMatrix) -> SymMatrix {
    let q = grad.len();
    let beta = 1.0 / (1.0 + dot(grad, grad));
    let tr = hess.trace();
    let h2 = hess.square();
    let hg = hess.matvec(grad);
    let ghg = dot(grad, &hg);
    SymMatrix::from_upper_fn(q, |a, b| {
        beta * (tr * hess.get(a, b) - h2.get(a, b))
            - beta * beta * (ghg * hess.get(a, b) - hg[a] * hg[b])
    })
}

pub fn ricci_at<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<SymMatrix> {
    let grad = eval_gradient(field, x)?;
    let hess = eval_hessian(field, x)?;
    Ok(ricci_from_derivatives(&grad, &hess))
}

/// Full scalar curvature from `∇f` and `H`.
pub fn scalar_curvature_from_derivatives(grad: &[f64], hess: &SymMatrix) -> f64 {
    let beta = 1.0 / (1.0 + dot(grad, grad));
    let tr = hess.trace();
    let hg = hess.matvec(grad);
    let grad_h2_grad = dot(&hg, &hg);
    let grad_h_grad = dot(grad, &hg);
    beta * (tr * tr - hess.trace_of_square()) + 2.0 * beta * beta * (grad_h2_grad - tr * grad_h_grad)
}

/// Scalar curvature at a critical point: `tr(H)² − tr(H²)`.
pub fn scalar_curvature_at_min(h: &SymMatrix) -> f64 {
    let tr = h.trace();
    tr * tr - h.trace_of_square()
}

/// Critical-point curvature together with the norm form when it applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimumCurvature {
    pub scalar_curvature: f64,
    pub psd: bool,
    /// `‖H‖_*² − ‖H‖_F²`; equals `scalar_curvature` only for PSD `H`.
    pub norm_form: f64,
    /// `None` when `H` is indefinite and the norm form does not apply.
    pub norm_identity_residual: Option<f64>,
}

pub fn minimum_curvature(h: &SymMatrix) -> Result<MinimumCurvature> {
    let norms = matrix_norms(h)?;
    let eig = eig_sym(h)?;
    let psd = eig.eigenvalues[0] >= -psd_tolerance(h);
    let sc = scalar_curvature_at_min(h);
    let norm_form = norms.nuclear * norms.nuclear - norms.frobenius * norms.frobenius;
    Ok(MinimumCurvature {
        scalar_curvature: sc,
        psd,
        norm_form,
        norm_identity_residual: psd.then(|| (sc - norm_form).abs()),
    })
}

/// Scalar curvature and the intermediate quantities behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub point: Vec<f64>,
    pub value: f64,
    pub beta: f64,
    pub grad_norm: f64,
    pub trace_h: f64,
    pub trace_h2: f64,
    pub nuclear_h: f64,
    pub frobenius_h: f64,
    pub scalar_curvature: f64,
    /// `tr(H)² − tr(H²)`, the curvature a critical point with this Hessian would have.
    pub critical_form: f64,
    pub at_critical_point: bool,
    pub hessian_psd: bool,
    /// The field is not C² (ReLU); curvature is only valid off the kinks.
    pub smoothness_warning: bool,
}

/// `1e-8 (1 + |f(x)|)`.
pub fn critical_grad_tol(value: f64) -> f64 {
    1e-8 * (1.0 + value.abs())
}

pub fn scalar_curvature_at<F: ScalarField + ?Sized>(field: &F, x: &[f64]) -> Result<CurvatureReport> {
    let value = eval_value(field, x)?;
    let grad = eval_gradient(field, x)?;
    let hess = eval_hessian(field, x)?;
    let norms = matrix_norms(&hess)?;
    let eig = eig_sym(&hess)?;
    let grad_norm = dot(&grad, &grad).sqrt();
    Ok(CurvatureReport {
        point: x.to_vec(),
        value,
        beta: 1.0 / (1.0 + grad_norm * grad_norm),
        grad_norm,
        trace_h: norms.trace,
        trace_h2: norms.trace_sq,
        nuclear_h: norms.nuclear,
        frobenius_h: norms.frobenius,
        scalar_curvature: scalar_curvature_from_derivatives(&grad, &hess),
        critical_form: scalar_curvature_at_min(&hess),
        at_critical_point: grad_norm <= critical_grad_tol(value),
        hessian_psd: eig.eigenvalues[0] >= -psd_tolerance(&hess),
        smoothness_warning: !field.is_smooth(),
    })
}

/// Hessian of `f ∘ φ`: `Jᵀ H(f) J + Σ_k (∂_k f) H^k(φ)`.
///
/// `jac_phi` is `q x p` for `φ: ℝ^p → ℝ^q`; `hess_phi_components[k]` is the
/// `p x p` Hessian of the k-th output of `φ`; `grad_f`, `hess_f` are taken at
/// `φ(x)`.
pub fn reparam_hessian(
    jac_phi: &Matrix,
    hess_phi_components: &[SymMatrix],
    grad_f: &[f64],
    hess_f: &SymMatrix,
) -> Result<SymMatrix> {
    let q = jac_phi.rows();
    let p = jac_phi.cols();
    if hess_f.dim() != q || grad_f.len() != q {
        return Err(Error::invalid(format!(
            "Jacobian has {q} rows but f lives in {} dimensions (gradient length {})",
            hess_f.dim(),
            grad_f.len()
        )));
    }
    if hess_phi_components.len() != q {
        return Err(Error::invalid(format!(
            "need {q} component Hessians of phi, got {}",
            hess_phi_components.len()
        )));
    }
    if let Some(bad) = hess_phi_components.iter().find(|h| h.dim() != p) {
        return Err(Error::invalid(format!(
            "component Hessian is {}x{}, expected {p}x{p}",
            bad.dim(),
            bad.dim()
        )));
    }
    let mut out = jac_phi.congruence(hess_f);
    for (gk, hk) in grad_f.iter().zip(hess_phi_components) {
        if *gk != 0.0 {
            out = out.add(&hk.scaled(*gk));
        }
    }
    Ok(out)
}
