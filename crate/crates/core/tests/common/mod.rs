//! Independent reference computations for the integration tests. Nothing here
//! calls into the closed-form geometry of the library.

#![allow(dead_code)]

use losscurv::fields::{Capabilities, ScalarField};
use losscurv::linalg::{Matrix, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Orthogonal matrix from Gram–Schmidt on a Gaussian matrix.
pub fn random_orthogonal(q: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    while cols.len() < q {
        let mut v: Vec<f64> = (0..q).map(|_| gaussian(rng)).collect();
        for _ in 0..2 {
            for c in &cols {
                let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    // rows of the returned matrix are the columns built above
    (0..q).map(|i| (0..q).map(|j| cols[j][i]).collect()).collect()
}

/// `Q diag(λ) Qᵀ`.
pub fn from_spectrum(q_mat: &[Vec<f64>], lambda: &[f64]) -> SymMatrix {
    let n = lambda.len();
    SymMatrix::from_upper_fn(n, |i, j| (0..n).map(|k| q_mat[i][k] * lambda[k] * q_mat[j][k]).sum())
}

pub fn random_psd(q: usize, rng: &mut ChaCha8Rng) -> (SymMatrix, Vec<f64>) {
    let lambda: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..3.0)).collect();
    let o = random_orthogonal(q, rng);
    (from_spectrum(&o, &lambda), lambda)
}

/// Symmetric matrix with at least one eigenvalue ≤ −0.1.
pub fn random_indefinite(q: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let mut lambda: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..3.0)).collect();
    lambda[rng.random_range(0..q)] = rng.random_range(-2.0..-0.1);
    let o = random_orthogonal(q, rng);
    from_spectrum(&o, &lambda)
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                m[r].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Pullback metric `I + ∇f ∇fᵀ` as nested rows.
pub fn metric(grad: &[f64]) -> Vec<Vec<f64>> {
    let q = grad.len();
    (0..q)
        .map(|i| (0..q).map(|j| if i == j { 1.0 } else { 0.0 } + grad[i] * grad[j]).collect())
        .collect()
}

/// Levi-Civita symbols `Γ^i_kl = ½ g^{im} (∂_k g_ml + ∂_l g_mk − ∂_m g_kl)`
/// with the metric derivatives taken by central differences of `g(x)`.
/// Indexed `[i][k][l]`.
pub fn christoffel_from_metric_fd(grad_at: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<Vec<f64>>> {
    let q = x.len();
    // dg[m][a][b] = ∂_m g_ab
    let dg: Vec<Vec<Vec<f64>>> = (0..q)
        .map(|m| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[m] += h;
            xm[m] -= h;
            let gp = metric(&grad_at(&xp));
            let gm = metric(&grad_at(&xm));
            (0..q).map(|a| (0..q).map(|b| (gp[a][b] - gm[a][b]) / (2.0 * h)).collect()).collect()
        })
        .collect();
    let g_inv = inverse(&metric(&grad_at(x)));
    (0..q)
        .map(|i| {
            (0..q)
                .map(|k| {
                    (0..q)
                        .map(|l| {
                            0.5 * (0..q).map(|m| g_inv[i][m] * (dg[k][m][l] + dg[l][m][k] - dg[m][k][l])).sum::<f64>()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Scalar curvature of the paraboloid `½(u² + v²)`.
pub fn paraboloid_sc(u: f64, v: f64) -> f64 {
    let s = 1.0 + u * u + v * v;
    2.0 / (s * s)
}

/// `E[½ x_tᵀ H x_t]` for `dx = −Hx dt + H^{1/2} dW`, `x₀ = 0`, given the
/// eigenvalues of `H`: each mode has variance `(1 − e^{−2λt}) / 2`.
pub fn ou_expected_escape(eigenvalues: &[f64], t: f64) -> f64 {
    eigenvalues.iter().map(|&l| 0.5 * l * (1.0 - (-2.0 * l * t).exp()) / 2.0).sum()
}

/// `tr(A)² − tr(A²)` computed entrywise.
pub fn critical_sc(a: &SymMatrix) -> f64 {
    let n = a.dim();
    let tr: f64 = (0..n).map(|i| a.get(i, i)).sum();
    let tr2: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a.get(i, j) * a.get(j, i)).sum();
    tr * tr - tr2
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    (0..n).map(|i| (0..m).map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn sym_rows(a: &SymMatrix) -> Vec<Vec<f64>> {
    a.to_rows()
}

/// `f ∘ φ` for a linear map `φ(y) = R y + c`.
pub struct LinearPullback<F> {
    pub inner: F,
    pub r: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

impl<F: ScalarField> LinearPullback<F> {
    fn push(&self, y: &[f64]) -> Vec<f64> {
        self.r.iter().zip(&self.c).map(|(row, c)| row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + c).collect()
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_rows(&self.r).unwrap()
    }
}

impl<F: ScalarField> ScalarField for LinearPullback<F> {
    fn dim(&self) -> usize {
        self.r[0].len()
    }
    fn value(&self, y: &[f64]) -> f64 {
        self.inner.value(&self.push(y))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ANALYTIC
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let g = self.inner.gradient(&self.push(y));
        (0..self.dim()).map(|j| (0..g.len()).map(|i| self.r[i][j] * g[i]).sum()).collect()
    }
    fn hessian(&self, y: &[f64]) -> SymMatrix {
        let h = self.inner.hessian(&self.push(y)).to_rows();
        let rt = transpose(&self.r);
        let m = matmul(&matmul(&rt, &h), &self.r);
        SymMatrix::from_upper_fn(self.dim(), |i, j| 0.5 * (m[i][j] + m[j][i]))
    }
}
