//! Dense symmetric linear algebra.
//!
//! [`SymMatrix`] holds Hessians, metrics and Ricci tensors. The eigensolver is
//! a cyclic Jacobi iteration, which is accurate to a few ulps for the sizes
//! used here (up to a few hundred rows).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense symmetric `q x q` matrix stored row-major.
///
/// Both triangles are stored and kept exactly equal; constructors that accept
/// arbitrary input take the upper triangle as authoritative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn scalar(dim: usize, lambda: f64) -> Self {
        Self::from_diag(&vec![lambda; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = *d;
        }
        m
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds a matrix from rows; the upper triangle wins when the input is
    /// not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix must be square"));
        }
        Ok(Self::from_upper_fn(dim, |i, j| rows[i][j]))
    }

    /// Row-major constructor, symmetrised as `(A + Aᵀ)/2`.
    pub fn symmetrize_from(dim: usize, data: &[f64]) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self::from_upper_fn(dim, |i, j| 0.5 * (data[i * dim + j] + data[j * dim + i])))
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_upper_fn(v.len(), |i, j| v[i] * v[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `tr(A²) = Σ a_ij²` for symmetric `A`.
    pub fn trace_of_square(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.trace_of_square().sqrt()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    /// `vᵀ A w`.
    pub fn bilinear(&self, v: &[f64], w: &[f64]) -> f64 {
        dot(v, &self.matvec(w))
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.bilinear(v, v)
    }

    /// `A²`, symmetric by construction.
    pub fn square(&self) -> Self {
        let n = self.dim;
        Self::from_upper_fn(n, |i, j| dot(self.row(i), self.row(j)))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    /// General product `A B` as a dense matrix.
    pub fn matmul(&self, other: &Self) -> Matrix {
        Matrix::from_sym(self).matmul(&Matrix::from_sym(other))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// General dense row-major matrix, used for Jacobians and eigenvector bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("matrix rows must be non-empty and of equal length"));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    pub fn from_sym(a: &SymMatrix) -> Self {
        Self { rows: a.dim(), cols: a.dim(), data: a.as_slice().to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect()
    }

    /// `Jᵀ A J`, symmetrised.
    pub fn congruence(&self, a: &SymMatrix) -> SymMatrix {
        assert_eq!(self.rows, a.dim());
        let aj = Matrix::from_sym(a).matmul(self);
        let jt_a_j = self.transpose().matmul(&aj);
        SymMatrix::symmetrize_from(self.cols, &jt_a_j.data).expect("square by construction")
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Determinant by partial-pivot LU.
    pub fn determinant(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .unwrap();
            if a[p * n + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            let pivot = a[k * n + k];
            det *= pivot;
            for i in k + 1..n {
                let factor = a[i * n + k] / pivot;
                for j in k..n {
                    a[i * n + j] -= factor * a[k * n + j];
                }
            }
        }
        det
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.rows;
        if self.cols != n || b.len() != n {
            return Err(Error::invalid("solve needs a square system"));
        }
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k].abs() < f64::MIN_POSITIVE {
                return Err(Error::invalid("singular system"));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                x.swap(k, p);
            }
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k * n + j] * x[j]).sum();
            x[k] = (x[k] - s) / a[k * n + k];
        }
        Ok(x)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        SymMatrix::from_upper_fn(n, |i, j| {
            (0..n).map(|k| v[(i, k)] * self.eigenvalues[k] * v[(j, k)]).sum()
        })
    }

    /// Applies `g(λ)` to the spectrum and rebuilds the matrix.
    pub fn map_spectrum(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        EigenDecomposition {
            eigenvalues: self.eigenvalues.iter().map(|&l| g(l)).collect(),
            eigenvectors: self.eigenvectors.clone(),
        }
        .reconstruct()
    }
}

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eig_sym(a: &SymMatrix) -> Result<EigenDecomposition> {
    if !a.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = a.dim();
    let mut m = a.as_slice().to_vec();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();

    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[i * n + j] * m[i * n + j])
                .sum::<f64>()
                .sqrt();
            if off < JACOBI_REL_TOL * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    m[p * n + p] -= t * apq;
                    m[q * n + q] += t * apq;
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    for r in 0..n {
                        if r == p || r == q {
                            continue;
                        }
                        let arp = m[r * n + p];
                        let arq = m[r * n + q];
                        let new_rp = c * arp - s * arq;
                        let new_rq = s * arp + c * arq;
                        m[r * n + p] = new_rp;
                        m[p * n + r] = new_rp;
                        m[r * n + q] = new_rq;
                        m[q * n + r] = new_rq;
                    }
                    for r in 0..n {
                        let vrp = v[(r, p)];
                        let vrq = v[(r, q)];
                        v[(r, p)] = c * vrp - s * vrq;
                        v[(r, q)] = s * vrp + c * vrq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let eigenvalues = order.iter().map(|&i| m[i * n + i]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, col)] = v[(r, src)];
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Spectral norms of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixNorms {
    pub nuclear: f64,
    pub frobenius: f64,
    pub trace: f64,
    pub trace_sq: f64,
}

pub fn matrix_norms(a: &SymMatrix) -> Result<MatrixNorms> {
    let eig = eig_sym(a)?;
    let nuclear = eig.eigenvalues.iter().map(|l| l.abs()).sum();
    let trace_sq = a.trace_of_square();
    Ok(MatrixNorms { nuclear, frobenius: trace_sq.sqrt(), trace: a.trace(), trace_sq })
}

/// Default tolerance below which negative eigenvalues count as round-off.
pub fn psd_tolerance(a: &SymMatrix) -> f64 {
    1e-10 * a.frobenius_norm()
}

/// True when every eigenvalue is at least `-psd_tolerance(a)`.
pub fn is_psd(a: &SymMatrix) -> Result<bool> {
    let eig = eig_sym(a)?;
    Ok(eig.eigenvalues.first().is_none_or(|&l| l >= -psd_tolerance(a)))
}

/// Principal square root of a PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSqrt {
    pub root: SymMatrix,
    /// At least one slightly negative eigenvalue was set to zero.
    pub clamped: bool,
    pub min_eigenvalue: f64,
}

pub fn sqrt_psd(a: &SymMatrix) -> Result<PsdSqrt> {
    sqrt_psd_with_tol(a, psd_tolerance(a))
}

pub fn sqrt_psd_with_tol(a: &SymMatrix, tol: f64) -> Result<PsdSqrt> {
    let eig = eig_sym(a)?;
    let min_eigenvalue = eig.eigenvalues[0];
    if min_eigenvalue < -tol {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
    }
    let clamped = min_eigenvalue < 0.0;
    let root = eig.map_spectrum(|l| l.max(0.0).sqrt());
    Ok(PsdSqrt { root, clamped, min_eigenvalue })
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        SymMatrix::from_upper_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_error(v: &Matrix) -> f64 {
        let vtv = v.transpose().matmul(v);
        let n = v.cols();
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = vtv[(i, j)] - if i == j { 1.0 } else { 0.0 };
                err += d * d;
            }
        }
        err.sqrt()
    }

    #[test]
    fn identity_eigenvalues() {
        let e = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_sorted_ascending() {
        let e = eig_sym(&SymMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rank_one_update_of_identity() {
        let v = [1.0, 2.0, 2.0];
        let g = SymMatrix::identity(3).add(&SymMatrix::outer(&v));
        let e = eig_sym(&g).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-10);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-10);
        assert!((e.eigenvalues[2] - 10.0).abs() < 1e-10);
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = SymMatrix::identity(2);
        a.set(0, 1, f64::NAN);
        assert!(matches!(eig_sym(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn norms_of_small_diagonals() {
        let n = matrix_norms(&SymMatrix::from_diag(&[1.0, 1.0])).unwrap();
        assert_eq!((n.nuclear, n.trace, n.trace_sq), (2.0, 2.0, 2.0));
        assert!((n.frobenius - 2f64.sqrt()).abs() < 1e-15);

        let n = matrix_norms(&SymMatrix::from_diag(&[2.0, -2.0])).unwrap();
        assert_eq!((n.nuclear, n.trace, n.trace_sq), (4.0, 0.0, 8.0));
        assert!((n.frobenius - 8f64.sqrt()).abs() < 1e-15);

        let a = matrix_norms(&SymMatrix::from_diag(&[2.0, 0.0])).unwrap();
        let b = matrix_norms(&SymMatrix::from_diag(&[0.0, 2.0])).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.nuclear, a.frobenius, a.trace, a.trace_sq), (2.0, 2.0, 2.0, 4.0));
    }

    #[test]
    fn sqrt_of_simple_matrices() {
        let r = sqrt_psd(&SymMatrix::identity(3)).unwrap();
        assert!(r.root.max_abs_diff(&SymMatrix::identity(3)) < 1e-15);
        assert!(!r.clamped);

        let r = sqrt_psd(&SymMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!(r.root.max_abs_diff(&SymMatrix::from_diag(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn sqrt_clamps_round_off_negatives() {
        let r = sqrt_psd(&SymMatrix::from_diag(&[1.0, -1e-12])).unwrap();
        assert!(r.clamped);
        assert!(r.root.max_abs_diff(&SymMatrix::from_diag(&[1.0, 0.0])) < 1e-15);
        assert_eq!(r.min_eigenvalue, -1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let err = sqrt_psd(&SymMatrix::from_diag(&[1.0, -0.5])).unwrap_err();
        assert_eq!(err, Error::NotPositiveSemidefinite { min_eigenvalue: -0.5 });
    }

    #[test]
    fn determinant_and_solve() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        assert!((m.determinant() - 5.0).abs() < 1e-14);
        let x = m.solve(&[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_matrices_reconstruct() {
        for n in [1usize, 2, 5, 12, 20] {
            for seed in 0..5 {
                let a = random_sym(n, seed * 31 + n as u64);
                let e = eig_sym(&a).unwrap();
                let err = e.reconstruct().sub(&a).frobenius_norm();
                assert!(err <= 1e-10 * a.frobenius_norm().max(1.0), "n={n} err={err}");
                assert!(orthonormality_error(&e.eigenvectors) <= 1e-10);
                assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    proptest! {
        #[test]
        fn psd_identity_between_trace_and_norms(
            entries in proptest::collection::vec(-1.0f64..1.0, 36),
            n in 1usize..=6,
        ) {
            // B Bᵀ is PSD
            let b = Matrix::from_rows(
                &(0..n).map(|i| entries[i * 6..i * 6 + n].to_vec()).collect::<Vec<_>>()
            ).unwrap();
            let bbt = b.matmul(&b.transpose());
            let a = SymMatrix::from_upper_fn(n, |i, j| bbt[(i, j)]);
            let norms = matrix_norms(&a).unwrap();
            let lhs = norms.trace * norms.trace - norms.trace_sq;
            let rhs = norms.nuclear * norms.nuclear - norms.frobenius * norms.frobenius;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + norms.nuclear * norms.nuclear));
        }

        #[test]
        fn rank_one_update_spectrum(v in proptest::collection::vec(-3.0f64..3.0, 1..8)) {
            let q = v.len();
            let g = SymMatrix::identity(q).add(&SymMatrix::outer(&v));
            let e = eig_sym(&g).unwrap();
            let top = 1.0 + dot(&v, &v);
            prop_assert!((e.eigenvalues[q - 1] - top).abs() <= 1e-10 * top);
            for l in &e.eigenvalues[..q - 1] {
                prop_assert!((l - 1.0).abs() <= 1e-10);
            }
        }

        #[test]
        fn sqrt_squares_back(entries in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let b = Matrix::from_rows(&entries.chunks(4).map(|c| c.to_vec()).collect::<Vec<_>>()).unwrap();
            let bbt = b.matmul(&b.transpose());
            let a = SymMatrix::from_upper_fn(4, |i, j| bbt[(i, j)]);
            let r = sqrt_psd(&a).unwrap();
            let err = r.root.square().sub(&a).frobenius_norm();
            prop_assert!(err <= 1e-8 * a.frobenius_norm().max(1.0));
        }
    }
}
