//! Complex 2x2 matrices: the pointwise arithmetic under every loop operation.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO_C: C64 = C64::new(0.0, 0.0);
pub const ONE_C: C64 = C64::new(1.0, 0.0);
pub const I_C: C64 = C64::new(0.0, 1.0);

/// Row-major complex 2x2 matrix [[a, b], [c, d]].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::new(
            C64::new(a, 0.0),
            C64::new(b, 0.0),
            C64::new(c, 0.0),
            C64::new(d, 0.0),
        )
    }

    pub fn zero() -> Self {
        Self::new(ZERO_C, ZERO_C, ZERO_C, ZERO_C)
    }

    pub fn identity() -> Self {
        Self::from_real(1.0, 0.0, 0.0, 1.0)
    }

    /// Pauli basis of the Hermitian traceless matrices.
    pub fn sigma1() -> Self {
        Self::from_real(0.0, 1.0, 1.0, 0.0)
    }

    pub fn sigma2() -> Self {
        Self::new(ZERO_C, I_C, -I_C, ZERO_C)
    }

    pub fn sigma3() -> Self {
        Self::from_real(1.0, 0.0, 0.0, -1.0)
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Self::new(a, ZERO_C, ZERO_C, d)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> C64 {
        self.a + self.d
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::new(self.a.conj(), self.c.conj(), self.b.conj(), self.d.conj())
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.a.conj(), self.b.conj(), self.c.conj(), self.d.conj())
    }

    /// Adjugate: the exact inverse for unit-determinant matrices.
    pub fn adjugate(&self) -> Self {
        Self::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() < 1e-300 {
            return Err(Error::DivisionBySmall(det.norm()));
        }
        Ok(self.adjugate().scale(det.inv()))
    }

    pub fn norm(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()).sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (*self - self.adjoint()).norm() <= tol * (1.0 + self.norm())
    }

    pub fn hermitize(&self) -> Self {
        (*self + self.adjoint()).scale(C64::new(0.5, 0.0))
    }

    /// Eigenvalues sorted so the pair matches the returned eigenvector columns.
    pub fn eigenvalues(&self) -> (C64, C64) {
        let half_tr = self.trace() * 0.5;
        let disc = (half_tr * half_tr - self.det()).sqrt();
        (half_tr + disc, half_tr - disc)
    }

    pub(crate) fn eigenvector(&self, lambda: C64) -> [C64; 2] {
        // (A - lambda) v = 0: pick the numerically larger row construction.
        let r1 = [self.b, lambda - self.a];
        let r2 = [lambda - self.d, self.c];
        let n1 = r1[0].norm_sqr() + r1[1].norm_sqr();
        let n2 = r2[0].norm_sqr() + r2[1].norm_sqr();
        let v = if n1 >= n2 { r1 } else { r2 };
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if n < 1e-300 {
            [ONE_C, ZERO_C]
        } else {
            [v[0] / n, v[1] / n]
        }
    }

    /// Matrix exponential via the trace-free closed form.
    pub fn exp(&self) -> Self {
        let half_tr = self.trace() * 0.5;
        let x = *self - Mat2::identity().scale(half_tr);
        // x is trace-free: x^2 = -det(x) I = mu^2 I.
        let mu2 = -x.det();
        let mu = mu2.sqrt();
        let (ch, sh_over) = if mu.norm() < 1e-6 {
            // cosh(mu) and sinh(mu)/mu by series in mu^2
            let c = ONE_C + mu2 * 0.5 + mu2 * mu2 / 24.0 + mu2 * mu2 * mu2 / 720.0;
            let s = ONE_C + mu2 / 6.0 + mu2 * mu2 / 120.0 + mu2 * mu2 * mu2 / 5040.0;
            (c, s)
        } else {
            (mu.cosh(), mu.sinh() / mu)
        };
        (Mat2::identity().scale(ch) + x.scale(sh_over)).scale(half_tr.exp())
    }

    /// Principal matrix logarithm via the trace-free closed form
    /// log(M) = alpha I + beta (M - m I), stable through defective points.
    /// Errors when an eigenvalue sits on the negative real cut.
    pub fn log(&self) -> Result<Self> {
        let m = self.trace() * 0.5;
        let x = *self - Mat2::identity().scale(m);
        let g = (-x.det()).sqrt(); // eigenvalues are m +/- g
        for l in [m + g, m - g] {
            if l.norm() < 1e-300 {
                return Err(Error::LogBranch("singular matrix".into()));
            }
            if l.re < 0.0 && l.im.abs() < 1e-12 * l.norm() {
                return Err(Error::LogBranch(format!(
                    "eigenvalue {l:.6e} on the negative real cut"
                )));
            }
        }
        let alpha = ((m + g).ln() + (m - g).ln()) * 0.5;
        let beta = if g.norm() < 1e-5 * m.norm() {
            // (log(m+g) - log(m-g)) / (2g) expanded in g/m
            let w = g / m;
            let w2 = w * w;
            (ONE_C + w2 / 3.0 + w2 * w2 / 5.0) / m
        } else {
            ((m + g).ln() - (m - g).ln()) / (g * 2.0)
        };
        Ok(Mat2::identity().scale(alpha) + x.scale(beta))
    }

    /// Square root of a Hermitian positive definite matrix:
    /// (A + sqrt(det) I) / sqrt(tr + 2 sqrt(det)), exact by Cayley-Hamilton.
    pub fn sqrt_hermitian(&self) -> Result<Self> {
        let det = self.det().re;
        let tr = self.trace().re;
        if det <= 0.0 || tr <= 0.0 {
            return Err(Error::Hyperbolic(format!(
                "not positive definite: det = {det:.3e}, tr = {tr:.3e}"
            )));
        }
        let s = det.sqrt();
        let denom = (tr + 2.0 * s).sqrt();
        Ok((*self + Mat2::identity().scale(C64::new(s, 0.0))).scale(C64::new(1.0 / denom, 0.0)))
    }

    /// Polar decomposition A = S Q with S Hermitian positive definite and Q unitary.
    pub fn polar(&self) -> Result<(Self, Self)> {
        let s = (*self * self.adjoint()).hermitize().sqrt_hermitian()?;
        let q = s.inverse()? * *self;
        Ok((s, q))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (*self * self.adjoint() - Mat2::identity()).norm() <= tol
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-ONE_C)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(x: &Mat2, y: &Mat2, tol: f64) -> bool {
        (*x - *y).norm() <= tol
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert!(close(&Mat2::zero().exp(), &Mat2::identity(), 1e-15));
    }

    #[test]
    fn exp_log_roundtrip() {
        let x = Mat2::new(
            C64::new(0.1, 0.3),
            C64::new(-0.2, 0.05),
            C64::new(0.4, -0.1),
            C64::new(-0.1, -0.3),
        );
        let y = x.exp().log().unwrap();
        assert!(close(&x, &y, 1e-12), "got {y:?}");
    }

    #[test]
    fn exp_pauli_rotation() {
        // exp(i theta sigma3 / 2) = diag(e^{i theta/2}, e^{-i theta/2})
        let theta = 0.7;
        let x = Mat2::sigma3().scale(I_C * (theta / 2.0));
        let e = x.exp();
        let want = Mat2::diag(
            (I_C * (theta / 2.0)).exp(),
            (-I_C * (theta / 2.0)).exp(),
        );
        assert!(close(&e, &want, 1e-14));
    }

    #[test]
    fn log_rejects_negative_cut() {
        let m = Mat2::from_real(-2.0, 0.0, 0.0, -0.5);
        assert!(m.log().is_err());
    }

    #[test]
    fn sqrt_hermitian_squares_back() {
        let m = Mat2::new(
            C64::new(2.0, 0.0),
            C64::new(0.3, 0.4),
            C64::new(0.3, -0.4),
            C64::new(1.0, 0.0),
        );
        let s = m.sqrt_hermitian().unwrap();
        assert!(close(&(s * s), &m, 1e-13));
        assert!(s.is_hermitian(1e-14));
    }

    #[test]
    fn polar_recombines() {
        let a = Mat2::new(
            C64::new(1.2, 0.1),
            C64::new(0.3, -0.7),
            C64::new(-0.2, 0.4),
            C64::new(0.9, 0.2),
        );
        let det = a.det();
        let a = a.scale(det.sqrt().inv()); // unit determinant
        let (s, q) = a.polar().unwrap();
        assert!(close(&(s * q), &a, 1e-12));
        assert!(q.is_unitary(1e-12));
        assert!(s.is_hermitian(1e-12));
    }

    #[test]
    fn defective_log() {
        let m = Mat2::from_real(1.0, 3.0, 0.0, 1.0);
        let l = m.log().unwrap();
        assert!(close(&l.exp(), &m, 1e-12));
    }
}
