//! Small fixed-size dense matrices.
//!
//! Everything in the pipeline is 2×2, 3×3 or 2×3, so a const-generic array
//! wrapper is enough and keeps the hot loops allocation free.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use crate::scalar::Real;

/// Row-major `R`×`C` matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix<T, const R: usize, const C: usize>(pub [[T; C]; R]);

/// Column vector.
pub type Vector<T, const N: usize> = Matrix<T, N, 1>;
pub type Vec2<T> = Vector<T, 2>;
pub type Vec3<T> = Vector<T, 3>;
pub type Mat2<T> = Matrix<T, 2, 2>;
pub type Mat3<T> = Matrix<T, 3, 3>;
pub type Mat2x3<T> = Matrix<T, 2, 3>;
pub type Mat3x2<T> = Matrix<T, 3, 2>;

#[inline]
pub fn vec2<T>(x: T, y: T) -> Vec2<T> {
    Matrix([[x], [y]])
}

#[inline]
pub fn vec3<T>(x: T, y: T, z: T) -> Vec3<T> {
    Matrix([[x], [y], [z]])
}

impl<T: Real, const R: usize, const C: usize> Default for Matrix<T, R, C> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Real, const R: usize, const C: usize> Matrix<T, R, C> {
    #[inline]
    pub fn zeros() -> Self {
        Matrix([[T::zero(); C]; R])
    }

    #[inline]
    pub fn from_rows(rows: [[T; C]; R]) -> Self {
        Matrix(rows)
    }

    /// Builds from a row-major slice of exactly `R*C` values.
    pub fn from_row_major(values: &[T]) -> Option<Self> {
        if values.len() != R * C {
            return None;
        }
        let mut m = Self::zeros();
        for r in 0..R {
            for c in 0..C {
                m.0[r][c] = values[r * C + c];
            }
        }
        Some(m)
    }

    pub fn to_row_major(&self) -> Vec<T> {
        self.0.iter().flat_map(|row| row.iter().copied()).collect()
    }

    #[inline]
    pub fn transpose(&self) -> Matrix<T, C, R> {
        let mut t = Matrix::<T, C, R>::zeros();
        for r in 0..R {
            for c in 0..C {
                t.0[c][r] = self.0[r][c];
            }
        }
        t
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    #[inline]
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v = f(*v);
            }
        }
        m
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.0.iter().flat_map(|row| row.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        (*self - *other).max_abs()
    }

    pub fn frobenius_norm(&self) -> T {
        self.iter().map(|v| v * v).sum::<T>().sqrt()
    }
}

impl<T: Real, const N: usize> Matrix<T, N, N> {
    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: [T; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = diag[i];
        }
        m
    }

    pub fn diagonal(&self) -> [T; N] {
        let mut d = [T::zero(); N];
        for (i, v) in d.iter_mut().enumerate() {
            *v = self.0[i][i];
        }
        d
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        (*self + self.transpose()).scale(T::lit(0.5))
    }

    pub fn asymmetry(&self) -> T {
        self.max_abs_diff(&self.transpose())
    }

    /// `A·B·Aᵀ` style congruence with `self` as the outer factor.
    #[inline]
    pub fn conjugate<const M: usize>(outer: &Matrix<T, M, N>, inner: &Self) -> Matrix<T, M, M> {
        *outer * *inner * outer.transpose()
    }
}

impl<T: Real, const N: usize> Vector<T, N> {
    pub fn from_array(values: [T; N]) -> Self {
        let mut v = Self::zeros();
        for (i, x) in values.into_iter().enumerate() {
            v.0[i][0] = x;
        }
        v
    }

    pub fn to_array(&self) -> [T; N] {
        let mut a = [T::zero(); N];
        for (i, x) in a.iter_mut().enumerate() {
            *x = self.0[i][0];
        }
        a
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        (0..N).map(|i| self.0[i][0] * other.0[i][0]).sum()
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// `self · otherᵀ`.
    #[inline]
    pub fn outer(&self, other: &Self) -> Matrix<T, N, N> {
        let mut m = Matrix::zeros();
        for r in 0..N {
            for c in 0..N {
                m.0[r][c] = self.0[r][0] * other.0[c][0];
            }
        }
        m
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn x(&self) -> T {
        self.0[0][0]
    }
    #[inline]
    pub fn y(&self) -> T {
        self.0[1][0]
    }
    #[inline]
    pub fn z(&self) -> T {
        self.0[2][0]
    }

    pub fn cross(&self, o: &Self) -> Self {
        vec3(self.y() * o.z() - self.z() * o.y(), self.z() * o.x() - self.x() * o.z(), self.x() * o.y() - self.y() * o.x())
    }

    pub fn normalized(&self) -> Self {
        self.scale(T::one() / self.norm())
    }
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn x(&self) -> T {
        self.0[0][0]
    }
    #[inline]
    pub fn y(&self) -> T {
        self.0[1][0]
    }
}

impl<T: Real> Mat2<T> {
    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Matrix([[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]).scale(T::one() / det))
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> [T; 2] {
        let a = self.0[0][0];
        let d = self.0[1][1];
        let b = (self.0[0][1] + self.0[1][0]) * T::lit(0.5);
        let mean = (a + d) * T::lit(0.5);
        let half_diff = (a - d) * T::lit(0.5);
        let radius = half_diff.hypot(b);
        [mean - radius, mean + radius]
    }
}

impl<T: Real> Mat3<T> {
    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        let cof = Matrix([
            [m[1][1] * m[2][2] - m[1][2] * m[2][1], m[0][2] * m[2][1] - m[0][1] * m[2][2], m[0][1] * m[1][2] - m[0][2] * m[1][1]],
            [m[1][2] * m[2][0] - m[1][0] * m[2][2], m[0][0] * m[2][2] - m[0][2] * m[2][0], m[0][2] * m[1][0] - m[0][0] * m[1][2]],
            [m[1][0] * m[2][1] - m[1][1] * m[2][0], m[0][1] * m[2][0] - m[0][0] * m[2][1], m[0][0] * m[1][1] - m[0][1] * m[1][0]],
        ]);
        Some(cof.scale(T::one() / det))
    }

    /// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Option<Self> {
        let a = &self.0;
        let mut l = Self::zeros();
        for i in 0..3 {
            for j in 0..=i {
                let mut sum = a[i][j];
                for k in 0..j {
                    sum -= l.0[i][k] * l.0[j][k];
                }
                if i == j {
                    if sum <= T::zero() || !sum.is_finite() {
                        return None;
                    }
                    l.0[i][i] = sum.sqrt();
                } else {
                    l.0[i][j] = sum / l.0[j][j];
                }
            }
        }
        Some(l)
    }

    /// Cyclic Jacobi eigen-decomposition of the symmetric part.
    ///
    /// Returns eigenvalues in ascending order and the matrix whose columns are
    /// the matching unit eigenvectors.
    pub fn symmetric_eigen(&self) -> ([T; 3], Self) {
        let mut a = self.symmetrize();
        let mut v = Self::identity();
        let scale = a.max_abs();
        if scale == T::zero() {
            return ([T::zero(); 3], v);
        }
        for _sweep in 0..32 {
            let off = a.0[0][1].abs() + a.0[0][2].abs() + a.0[1][2].abs();
            if off <= T::epsilon() * scale * T::lit(1e-3) {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let apq = a.0[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.0[q][q] - a.0[p][p]) / (apq + apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a.0[k][p];
                    let akq = a.0[k][q];
                    a.0[k][p] = c * akp - s * akq;
                    a.0[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a.0[p][k];
                    let aqk = a.0[q][k];
                    a.0[p][k] = c * apk - s * aqk;
                    a.0[q][k] = s * apk + c * aqk;
                }
                for k in 0..3 {
                    let vkp = v.0[k][p];
                    let vkq = v.0[k][q];
                    v.0[k][p] = c * vkp - s * vkq;
                    v.0[k][q] = s * vkp + c * vkq;
                }
            }
        }
        let mut order = [0usize, 1, 2];
        let diag = a.diagonal();
        order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap_or(std::cmp::Ordering::Equal));
        let mut vals = [T::zero(); 3];
        let mut vecs = Self::zeros();
        for (dst, &src) in order.iter().enumerate() {
            vals[dst] = diag[src];
            for k in 0..3 {
                vecs.0[k][dst] = v.0[k][src];
            }
        }
        (vals, vecs)
    }

    pub fn min_eigenvalue(&self) -> T {
        self.symmetric_eigen().0[0]
    }

    /// True when every leading and non-leading principal minor is non-negative,
    /// which for a symmetric matrix is equivalent to positive semi-definiteness.
    pub fn principal_minors_nonnegative(&self) -> bool {
        let m = &self.0;
        let d = [m[0][0], m[1][1], m[2][2]];
        if d.iter().any(|&x| x < T::zero()) {
            return false;
        }
        let minors =
            [m[0][0] * m[1][1] - m[0][1] * m[1][0], m[0][0] * m[2][2] - m[0][2] * m[2][0], m[1][1] * m[2][2] - m[1][2] * m[2][1]];
        minors.iter().all(|&x| x >= T::zero()) && self.determinant() >= T::zero()
    }

    /// Symmetrizes and clamps eigenvalues below zero. Eigenvalues more negative than
    /// `tol` (relative to the matrix scale) are reported by returning `None`.
    pub fn clamp_psd(&self, tol: T) -> Option<Self> {
        let sym = self.symmetrize();
        if sym.principal_minors_nonnegative() {
            return Some(sym);
        }
        let (vals, vecs) = sym.symmetric_eigen();
        let floor = -tol * sym.max_abs().max(T::one());
        if vals[0] < floor {
            return None;
        }
        let clamped = Self::from_diagonal(vals.map(|v| v.max(T::zero())));
        Some(Self::conjugate(&vecs, &clamped).symmetrize())
    }
}

impl<T: Real, const R: usize, const C: usize> Add for Matrix<T, R, C> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        for r in 0..R {
            for c in 0..C {
                self.0[r][c] += rhs.0[r][c];
            }
        }
        self
    }
}

impl<T: Real, const R: usize, const C: usize> AddAssign for Matrix<T, R, C> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real, const R: usize, const C: usize> Sub for Matrix<T, R, C> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        for r in 0..R {
            for c in 0..C {
                self.0[r][c] -= rhs.0[r][c];
            }
        }
        self
    }
}

impl<T: Real, const R: usize, const C: usize> Neg for Matrix<T, R, C> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<T: Real, const R: usize, const K: usize, const C: usize> Mul<Matrix<T, K, C>> for Matrix<T, R, K> {
    type Output = Matrix<T, R, C>;
    #[inline]
    fn mul(self, rhs: Matrix<T, K, C>) -> Matrix<T, R, C> {
        let mut out = Matrix::<T, R, C>::zeros();
        for r in 0..R {
            for c in 0..C {
                let mut acc = T::zero();
                for k in 0..K {
                    acc += self.0[r][k] * rhs.0[k][c];
                }
                out.0[r][c] = acc;
            }
        }
        out
    }
}

impl<T, const R: usize, const C: usize> Index<(usize, usize)> for Matrix<T, R, C> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.0[r][c]
    }
}

impl<T, const R: usize, const C: usize> IndexMut<(usize, usize)> for Matrix<T, R, C> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.0[r][c]
    }
}

impl<T, const N: usize> Index<usize> for Matrix<T, N, 1> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.0[i][0]
    }
}

impl<T, const N: usize> IndexMut<usize> for Matrix<T, N, 1> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i][0]
    }
}
