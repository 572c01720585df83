//! Stack-allocated square matrices of size 2 or 3.
//!
//! Deformation gradients and their derivatives are tiny and evaluated once per
//! element per energy evaluation, so they live on the stack in column-major
//! order. `as_slice` therefore yields `vec(F)` with index `i + j * d`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquareMat {
    dim: usize,
    data: [f64; 9],
}

impl SquareMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "only 2x2 and 3x3 matrices are supported");
        Self { dim, data: [0.0; 9] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a column-major slice of length `dim * dim`.
    pub fn from_col_major(dim: usize, values: &[f64]) -> Self {
        let mut m = Self::zeros(dim);
        assert_eq!(values.len(), dim * dim);
        m.data[..dim * dim].copy_from_slice(values);
        m
    }

    /// Builds a matrix from rows, mostly for tests and literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.dim * self.dim]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        let n = self.dim * self.dim;
        &mut self.data[..n]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn determinant(&self) -> f64 {
        let m = self;
        if self.dim == 2 {
            m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
        } else {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
    }

    /// Cofactor matrix, `cof(F) = det(F) F^{-T}`; the derivative of `det` with
    /// respect to `F`. Well defined for singular matrices.
    pub fn cofactor(&self) -> Self {
        let m = self;
        let mut c = Self::zeros(self.dim);
        if self.dim == 2 {
            c[(0, 0)] = m[(1, 1)];
            c[(0, 1)] = -m[(1, 0)];
            c[(1, 0)] = -m[(0, 1)];
            c[(1, 1)] = m[(0, 0)];
        } else {
            for i in 0..3 {
                for j in 0..3 {
                    let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                    let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                    c[(i, j)] = m[(i1, j1)] * m[(i2, j2)] - m[(i1, j2)] * m[(i2, j1)];
                }
            }
        }
        c
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(self.cofactor().transpose().scale(1.0 / det))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    /// Matrix-vector product with the leading `dim` entries of `v`.
    pub fn mul_vec(&self, v: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = (0..self.dim).map(|j| self[(i, j)] * v[j]).sum();
        }
        out
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_column_slice(self.dim, self.dim, self.as_slice())
    }
}

impl Index<(usize, usize)> for SquareMat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i + j * self.dim]
    }
}

impl IndexMut<(usize, usize)> for SquareMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i + j * self.dim]
    }
}

impl Mul for SquareMat {
    type Output = SquareMat;
    fn mul(self, rhs: SquareMat) -> SquareMat {
        debug_assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut out = SquareMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = (0..d).map(|k| self[(i, k)] * rhs[(k, j)]).sum();
            }
        }
        out
    }
}

impl Add for SquareMat {
    type Output = SquareMat;
    fn add(mut self, rhs: SquareMat) -> SquareMat {
        self += rhs;
        self
    }
}

impl AddAssign for SquareMat {
    fn add_assign(&mut self, rhs: SquareMat) {
        self.as_mut_slice()
            .iter_mut()
            .zip(rhs.as_slice())
            .for_each(|(a, b)| *a += b);
    }
}

impl Sub for SquareMat {
    type Output = SquareMat;
    fn sub(self, rhs: SquareMat) -> SquareMat {
        self + (-rhs)
    }
}

impl Neg for SquareMat {
    type Output = SquareMat;
    fn neg(self) -> SquareMat {
        self.scale(-1.0)
    }
}
