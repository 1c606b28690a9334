//! Fixed-size complex matrices for one- and two-qubit operators.
//!
//! Everything is stack allocated and row-major. Two-qubit indices follow the
//! `2 * alice + bob` convention, so `|HV⟩` is index 1.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// 2×2 complex matrix (single-qubit operator), row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([a, b, c, d])
    }

    pub const fn identity() -> Self {
        Mat2([ONE, ZERO, ZERO, ONE])
    }

    pub fn from_real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([C64::from(a), C64::from(b), C64::from(c), C64::from(d)])
    }

    /// `exp(-i θ n·σ / 2)`: rotation of the Bloch sphere by `angle` radians
    /// about `axis` (normalized internally).
    pub fn rotation(axis: [f64; 3], angle: f64) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if norm == 0.0 || angle == 0.0 {
            return Mat2::identity();
        }
        let (nx, ny, nz) = (axis[0] / norm, axis[1] / norm, axis[2] / norm);
        let c = (angle / 2.0).cos();
        let s = (angle / 2.0).sin();
        Mat2([
            C64::new(c, -s * nz),
            C64::new(-s * ny, -s * nx),
            C64::new(s * ny, -s * nx),
            C64::new(c, s * nz),
        ])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[2 * r + c]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat2([m[0], m[2], m[1], m[3]])
    }

    pub fn conj(&self) -> Self {
        Mat2(self.0.map(|z| z.conj()))
    }

    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }

    pub fn scale(&self, k: C64) -> Self {
        Mat2(self.0.map(|z| z * k))
    }

    pub fn apply(&self, v: &[C64; 2]) -> [C64; 2] {
        let m = &self.0;
        [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]]
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (*self * self.adjoint()).max_abs_diff(&Mat2::identity()) <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        Mat2(out)
    }
}

/// 4×4 complex matrix (two-qubit operator), row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4(pub [C64; 16]);

impl Mat4 {
    pub const fn zero() -> Self {
        Mat4([ZERO; 16])
    }

    pub fn identity() -> Self {
        Mat4::from_fn(|r, c| if r == c { ONE } else { ZERO })
    }

    pub fn from_fn(f: impl Fn(usize, usize) -> C64) -> Self {
        let mut out = [ZERO; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[4 * r + c] = f(r, c);
            }
        }
        Mat4(out)
    }

    /// Tensor product `a ⊗ b` with `a` acting on the first (Alice) qubit.
    pub fn kron(a: &Mat2, b: &Mat2) -> Self {
        Mat4::from_fn(|r, c| a.get(r / 2, c / 2) * b.get(r % 2, c % 2))
    }

    /// `|v⟩⟨v|`
    pub fn outer(v: &[C64; 4]) -> Self {
        Mat4::from_fn(|r, c| v[r] * v[c].conj())
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[4 * r + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, z: C64) {
        self.0[4 * r + c] = z;
    }

    pub fn adjoint(&self) -> Self {
        Mat4::from_fn(|r, c| self.get(c, r).conj())
    }

    pub fn conj(&self) -> Self {
        Mat4(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, k: C64) -> Self {
        Mat4(self.0.map(|z| z * k))
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self.get(i, i)).sum()
    }

    pub fn apply(&self, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|c| self.get(r, c) * v[c]).sum();
        }
        out
    }

    /// `⟨v|M|v⟩`
    pub fn expectation(&self, v: &[C64; 4]) -> C64 {
        let mv = self.apply(v);
        v.iter().zip(mv.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Mat4) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Off-diagonal Frobenius norm squared; the Jacobi convergence measure.
    pub(crate) fn off_diagonal_norm_sqr(&self) -> f64 {
        let mut acc = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    acc += self.get(r, c).norm_sqr();
                }
            }
        }
        acc
    }
}

impl Mul for Mat4 {
    type Output = Mat4;

    fn mul(self, rhs: Mat4) -> Mat4 {
        let mut out = [ZERO; 16];
        for r in 0..4 {
            for k in 0..4 {
                let a = self.0[4 * r + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..4 {
                    out[4 * r + c] += a * rhs.0[4 * k + c];
                }
            }
        }
        Mat4(out)
    }
}

impl Add for Mat4 {
    type Output = Mat4;

    fn add(self, rhs: Mat4) -> Mat4 {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        Mat4(out)
    }
}

impl Sub for Mat4 {
    type Output = Mat4;

    fn sub(self, rhs: Mat4) -> Mat4 {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o -= r;
        }
        Mat4(out)
    }
}

#[inline]
pub fn inner<const N: usize>(a: &[C64; N], b: &[C64; N]) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm<const N: usize>(a: &[C64; N]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
