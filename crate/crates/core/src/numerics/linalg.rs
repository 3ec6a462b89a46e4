//! Dense complex matrices: just enough for Gram matrices and HPD solves.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVector = Vec<Complex64>;

/// Pivot tolerance for Cholesky, relative to `trace / n`.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// `a^H b`, conjugating the left operand.
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Parameter(format!("cannot build a {rows}x{cols} matrix from {} entries", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stack equal-length vectors as the columns of a matrix.
    pub fn from_columns(columns: &[CVector]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if cols == 0 || rows == 0 || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Parameter("columns must be non-empty and of equal length".into()));
        }
        let mut m = Self::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            for (i, &z) in col.iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> CVector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Parameter(format!(
                "dimension mismatch: {}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                axpy(a, rhs.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// Adds `shift` to every diagonal entry (square matrices only).
    pub fn add_diagonal(&mut self, shift: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)].re += shift;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm_sqr(&self.data).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn trace_re(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].re).sum()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `A^H A`. The result is Hermitian by construction (lower half mirrored).
pub fn gram(a: &CMatrix) -> CMatrix {
    let n = a.cols;
    let mut g = CMatrix::zeros(n, n);
    for r in 0..a.rows {
        let row = a.row(r);
        for i in 0..n {
            let ai = row[i].conj();
            for j in i..n {
                g.data[i * n + j] += ai * row[j];
            }
        }
    }
    for i in 0..n {
        g.data[i * n + i].im = 0.0;
        for j in 0..i {
            g.data[i * n + j] = g.data[j * n + i].conj();
        }
    }
    g
}

/// Gram matrix of a set of column vectors, `[c_i^H c_j]`.
pub fn gram_of_columns(columns: &[CVector]) -> CMatrix {
    let n = columns.len();
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = Complex64::new(norm_sqr(&columns[i]), 0.0);
        for j in (i + 1)..n {
            let z = inner(&columns[i], &columns[j]);
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
    }
    g
}

/// Lower-triangular Cholesky factor `L` with `A = L L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: CMatrix,
}

impl Cholesky {
    pub fn new(a: &CMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::Parameter(format!("Cholesky needs a square matrix, got {}x{}", a.rows, a.cols)));
        }
        let n = a.rows;
        let tol = PIVOT_TOLERANCE * (a.trace_re() / n as f64).abs();
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !d.is_finite() || d <= tol {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let d = d.sqrt();
            l[(j, j)] = Complex64::new(d, 0.0);
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { factor: l })
    }

    pub fn factor(&self) -> &CMatrix {
        &self.factor
    }

    /// Solves `A X = B` for every column of `b`.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.factor.rows;
        if b.rows != n {
            return Err(Error::Parameter(format!("right-hand side has {} rows, expected {n}", b.rows)));
        }
        let l = &self.factor;
        let mut x = b.clone();
        for c in 0..b.cols {
            // L y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)].re;
            }
            // L^H x = y
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)].re;
            }
        }
        Ok(x)
    }
}

/// Solves `a X = b` for Hermitian positive definite `a`.
pub fn solve_hpd(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    Cholesky::new(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_circular_gaussian, SimRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> CMatrix {
        let data = sample_circular_gaussian(rng, rows * cols, 1.0).unwrap();
        CMatrix::from_row_major(rows, cols, data).unwrap()
    }

    fn naive_gram(a: &CMatrix) -> CMatrix {
        let mut g = CMatrix::zeros(a.cols(), a.cols());
        for i in 0..a.cols() {
            for j in 0..a.cols() {
                let mut s = c(0.0, 0.0);
                for r in 0..a.rows() {
                    s += a[(r, i)].conj() * a[(r, j)];
                }
                g[(i, j)] = s;
            }
        }
        g
    }

    fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gram_of_identity_is_identity() {
        let i3 = CMatrix::identity(3);
        assert_eq!(gram(&i3), i3);
    }

    #[test]
    fn gram_of_column_vector_is_squared_norm() {
        let v = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, -1.0)];
        let a = CMatrix::from_columns(std::slice::from_ref(&v)).unwrap();
        let g = gram(&a);
        assert_eq!((g.rows(), g.cols()), (1, 1));
        assert!((g[(0, 0)].re - norm_sqr(&v)).abs() < 1e-14);
        assert_eq!(g[(0, 0)].im, 0.0);
    }

    #[test]
    fn gram_matches_naive_triple_loop() {
        let mut rng = SimRng::new(11);
        let a = random_matrix(&mut rng, 6, 3);
        assert!(max_abs_diff(&gram(&a), &naive_gram(&a)) < 1e-12);
        let cols: Vec<CVector> = (0..3).map(|j| a.column(j)).collect();
        assert!(max_abs_diff(&gram_of_columns(&cols), &naive_gram(&a)) < 1e-12);
    }

    #[test]
    fn gram_is_hermitian_with_nonnegative_gershgorin_centres() {
        let mut rng = SimRng::new(5);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 5, 4);
            let g = gram(&a);
            assert!(max_abs_diff(&g, &g.adjoint()) < 1e-12);
            for i in 0..4 {
                assert!(g[(i, i)].re >= 0.0);
            }
        }
        // Rank-one Gram: every Gershgorin disc must reach into [0, inf).
        let v = random_matrix(&mut rng, 1, 3);
        let g = gram(&v);
        for i in 0..3 {
            let radius: f64 = (0..3).filter(|&j| j != i).map(|j| g[(i, j)].norm()).sum();
            assert!(g[(i, i)].re + radius >= 0.0);
        }
    }

    #[test]
    fn solve_with_identity_returns_rhs() {
        let mut rng = SimRng::new(3);
        let b = random_matrix(&mut rng, 4, 2);
        let x = solve_hpd(&CMatrix::identity(4), &b).unwrap();
        assert!(max_abs_diff(&x, &b) < 1e-15);
    }

    #[test]
    fn solve_diagonal() {
        let a = CMatrix::from_diag(&[2.0, 4.0]);
        let x = solve_hpd(&a, &CMatrix::identity(2)).unwrap();
        assert!(max_abs_diff(&x, &CMatrix::from_diag(&[0.5, 0.25])) < 1e-15);
    }

    #[test]
    fn solve_random_hpd_has_small_residual() {
        let mut rng = SimRng::new(8);
        let m = random_matrix(&mut rng, 12, 8);
        let mut a = gram(&m);
        a.add_diagonal(0.1);
        let b = random_matrix(&mut rng, 8, 3);
        let x = solve_hpd(&a, &b).unwrap();
        let r = a.matmul(&x).unwrap();
        let resid: Vec<Complex64> = r.as_slice().iter().zip(b.as_slice()).map(|(p, q)| p - q).collect();
        assert!(norm_sqr(&resid).sqrt() / b.frobenius_norm() <= 1e-10);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut rng = SimRng::new(21);
        for _ in 0..10 {
            let m = random_matrix(&mut rng, 20, 6);
            let a = gram(&m);
            let x0 = random_matrix(&mut rng, 6, 2);
            let b = a.matmul(&x0).unwrap();
            let x = solve_hpd(&a, &b).unwrap();
            assert!(max_abs_diff(&x, &x0) / x0.frobenius_norm() < 1e-8);
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        // Second column is a multiple of the first.
        let v = vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)];
        let w: CVector = v.iter().map(|z| z * c(0.0, 3.0)).collect();
        let g = gram(&CMatrix::from_columns(&[v, w]).unwrap());
        match solve_hpd(&g, &CMatrix::identity(2)) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected pivot failure, got {other:?}"),
        }
        let neg = CMatrix::from_diag(&[-1.0, 1.0]);
        assert!(matches!(Cholesky::new(&neg), Err(Error::NotPositiveDefinite { pivot: 0 })));
    }
}
