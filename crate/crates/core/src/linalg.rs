//! Small dense complex linear algebra.
//!
//! Dimensions here never exceed a few dozen, so everything is plain row-major
//! `Vec` storage. Hermitian functions are computed through the real symmetric
//! embedding `A + iB -> [[A, -B], [B, A]]`, which lets a single real Jacobi
//! eigensolver serve both the real and the complex case.

use std::ops::{Index, IndexMut};

use num_traits::{One, Zero};

use crate::scalar::{Complex, Real};

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<R> {
    dim: usize,
    data: Vec<Complex<R>>,
}

impl<R: Real> CMatrix<R> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex<R>) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_real_diagonal(diag: &[R]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex::new(d, R::zero());
        }
        m
    }

    /// Builds a matrix from row-major data; `data.len()` must be a perfect square.
    pub fn from_rows(data: Vec<Complex<R>>) -> Option<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        (dim * dim == data.len()).then_some(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex<R>] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex<R>] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    /// Largest elementwise deviation `|M_ij - conj(M_ji)|`.
    pub fn hermitian_defect(&self) -> R {
        let mut worst = R::zero();
        for i in 0..self.dim {
            for j in i..self.dim {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn trace(&self) -> Complex<R> {
        (0..self.dim).map(|i| self[(i, i)]).fold(Complex::zero(), |a, b| a + b)
    }

    /// `out = self * v`.
    pub fn mul_vec_into(&self, v: &[Complex<R>], out: &mut [Complex<R>]) {
        debug_assert_eq!(v.len(), self.dim);
        for (row, o) in self.data.chunks_exact(self.dim).zip(out.iter_mut()) {
            *o = row
                .iter()
                .zip(v)
                .fold(Complex::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }

    pub fn mul_vec(&self, v: &[Complex<R>]) -> Vec<Complex<R>> {
        let mut out = vec![Complex::zero(); self.dim];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: Complex<R>) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> R {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).norm())
            .fold(R::zero(), R::max)
    }

    /// Real symmetric `2n x 2n` embedding `[[Re, -Im], [Im, Re]]`.
    fn real_embedding(&self) -> RMatrix<R> {
        let n = self.dim;
        let mut m = RMatrix::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self[(i, j)];
                m[(i, j)] = z.re;
                m[(i + n, j + n)] = z.re;
                m[(i, j + n)] = -z.im;
                m[(i + n, j)] = z.im;
            }
        }
        m
    }
}

impl<R> Index<(usize, usize)> for CMatrix<R> {
    type Output = Complex<R>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<R> {
        &self.data[i * self.dim + j]
    }
}

impl<R> IndexMut<(usize, usize)> for CMatrix<R> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<R> {
        &mut self.data[i * self.dim + j]
    }
}

/// Dense square real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RMatrix<R> {
    dim: usize,
    data: Vec<R>,
}

impl<R: Real> RMatrix<R> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![R::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = R::one();
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl<R> Index<(usize, usize)> for RMatrix<R> {
    type Output = R;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &R {
        &self.data[i * self.dim + j]
    }
}

impl<R> IndexMut<(usize, usize)> for RMatrix<R> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut R {
        &mut self.data[i * self.dim + j]
    }
}

/// Eigen-decomposition `A = V diag(values) V^T` of a real symmetric matrix.
/// Eigenvectors are the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<R> {
    pub values: Vec<R>,
    pub vectors: RMatrix<R>,
}

/// Cyclic Jacobi rotations. Only the upper triangle of `a` is read.
pub fn symmetric_eigen<R: Real>(a: &RMatrix<R>) -> SymmetricEigen<R> {
    let n = a.dim();
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    let mut v = RMatrix::identity(n);
    let scale = m
        .data
        .iter()
        .fold(R::zero(), |acc, &x| acc.max(x.abs()))
        .max(R::min_positive_value());
    let tol = R::epsilon() * scale;

    for _sweep in 0..100 {
        let mut off = R::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[(p, q)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * R::lit(1e-3) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + R::one()).sqrt());
                let c = R::one() / (t * t + R::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen {
        values: (0..n).map(|i| m[(i, i)]).collect(),
        vectors: v,
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<R: Real>(h: &CMatrix<R>) -> Vec<R> {
    let eig = symmetric_eigen(&h.real_embedding());
    let mut vals = eig.values;
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    // The embedding doubles every eigenvalue.
    vals.into_iter().step_by(2).collect()
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_spectral_norm<R: Real>(h: &CMatrix<R>) -> R {
    hermitian_eigenvalues(h)
        .into_iter()
        .fold(R::zero(), |acc, x| acc.max(x.abs()))
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn hermitian_propagator<R: Real>(h: &CMatrix<R>, t: R) -> CMatrix<R> {
    let n = h.dim();
    let eig = symmetric_eigen(&h.real_embedding());
    let q = &eig.vectors;
    let m = 2 * n;
    let cos: Vec<R> = eig.values.iter().map(|&l| (l * t).cos()).collect();
    let sin: Vec<R> = eig.values.iter().map(|&l| (l * t).sin()).collect();

    // Only the left block column of f(M) = Q f(L) Q^T is needed: rows 0..2n, cols 0..n.
    let block = |f: &[R], i: usize, j: usize| -> R {
        (0..m).fold(R::zero(), |acc, k| acc + q[(i, k)] * f[k] * q[(j, k)])
    };
    CMatrix::from_fn(n, |i, j| {
        let c_re = block(&cos, i, j);
        let c_im = block(&cos, i + n, j);
        let s_re = block(&sin, i, j);
        let s_im = block(&sin, i + n, j);
        // cos(Ht) - i sin(Ht)
        Complex::new(c_re + s_im, c_im - s_re)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn jacobi_reconstructs_symmetric_matrix() {
        let mut a = RMatrix::<f64>::zeros(3);
        let vals = [[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, -3.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = vals[i][j];
            }
        }
        let eig = symmetric_eigen(&a);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3)
                    .map(|k| eig.vectors[(i, k)] * eig.values[k] * eig.vectors[(j, k)])
                    .sum();
                assert!((r - vals[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pauli_y_eigenvalues() {
        let sy = CMatrix::from_rows(vec![c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]).unwrap();
        let ev = hermitian_eigenvalues(&sy);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn propagator_of_diagonal_is_phase() {
        let h = CMatrix::from_real_diagonal(&[1.5, -0.25]);
        let u = hermitian_propagator(&h, 2.0);
        assert!((u[(0, 0)] - Complex::from_polar(1.0, -3.0)).norm() < 1e-13);
        assert!((u[(1, 1)] - Complex::from_polar(1.0, 0.5)).norm() < 1e-13);
        assert!(u[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn propagator_is_unitary() {
        let h = CMatrix::from_rows(vec![
            c(1.0, 0.0),
            c(0.3, 0.7),
            c(-0.2, 0.1),
            c(0.3, -0.7),
            c(-0.5, 0.0),
            c(0.0, 1.1),
            c(-0.2, -0.1),
            c(0.0, -1.1),
            c(2.0, 0.0),
        ])
        .unwrap();
        let u = hermitian_propagator(&h, 0.9);
        let should_be_id = u.adjoint().matmul(&u);
        assert!(should_be_id.max_abs_diff(&CMatrix::identity(3)) < 1e-13);
    }
}
