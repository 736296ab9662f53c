//! Truncated matrix Laurent series in the spectral parameter ("loops"),
//! their arithmetic, norms and analytic functions.
//!
//! A loop holds coefficients for powers k in [-N, N]. Operations that can grow
//! the support truncate back to [-N, N] and accumulate the discarded relative
//! coefficient mass into a process-wide diagnostic (see [`tail_mass`]).

use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::mat2::{Mat2, ONE_C, ZERO_C};

// ---------------------------------------------------------------------------
// Discarded-tail diagnostic

static TAIL_BITS: AtomicU64 = AtomicU64::new(0);

fn tail_add(mass: f64) {
    if mass <= 0.0 || !mass.is_finite() {
        return;
    }
    // positive finite f64 bit patterns order like the numbers themselves
    TAIL_BITS.fetch_max(mass.to_bits(), Ordering::Relaxed);
}

/// Largest relative coefficient mass discarded by any single truncation
/// since the last reset.
pub fn tail_mass() -> f64 {
    f64::from_bits(TAIL_BITS.load(Ordering::Relaxed))
}

pub fn reset_tail_mass() {
    TAIL_BITS.store(0, Ordering::Relaxed);
}

/// Smallest power of two >= 4n + 4: the anti-aliasing sample count for
/// transform-based operations on order-n loops.
pub fn sample_count(n: usize) -> usize {
    let mut m = 1usize;
    while m < 4 * n + 4 {
        m *= 2;
    }
    m
}

/// Roots of unity table: w[j] = exp(2 pi i j / m).
fn twiddles(m: usize) -> Vec<C64> {
    (0..m)
        .map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64))
        .collect()
}

// ---------------------------------------------------------------------------
// Scalar loops

/// Truncated scalar Laurent series: coefficients for k in [-n, n].
#[derive(Clone, Debug, PartialEq)]
pub struct LoopScalar {
    n: usize,
    coeffs: Vec<C64>,
}

impl LoopScalar {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            coeffs: vec![ZERO_C; 2 * n + 1],
        }
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, ONE_C)
    }

    pub fn constant(n: usize, c: C64) -> Self {
        let mut s = Self::zero(n);
        s.set(0, c);
        s
    }

    /// Build from (power, coefficient) pairs.
    pub fn from_terms(n: usize, terms: &[(i64, C64)]) -> Self {
        let mut s = Self::zero(n);
        for &(k, c) in terms {
            s.set(k, s.coeff(k) + c);
        }
        s
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.n {
            ZERO_C
        } else {
            self.coeffs[(k + self.n as i64) as usize]
        }
    }

    pub fn set(&mut self, k: i64, c: C64) {
        assert!(
            k.unsigned_abs() as usize <= self.n,
            "coefficient index {k} out of range for order {}",
            self.n
        );
        self.coeffs[(k + self.n as i64) as usize] = c;
    }

    pub fn resize(&self, n: usize) -> Self {
        let mut out = Self::zero(n);
        let mut dropped = 0.0;
        for k in -(self.n as i64)..=(self.n as i64) {
            if k.unsigned_abs() as usize <= n {
                out.set(k, self.coeff(k));
            } else {
                dropped += self.coeff(k).norm();
            }
        }
        if dropped > 0.0 {
            tail_add(dropped / (self.abs_mass() + f64::MIN_POSITIVE));
        }
        out
    }

    fn abs_mass(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn eval(&self, lambda: C64) -> C64 {
        // Horner in lambda for k >= 0 and in 1/lambda for k < 0; the negative
        // part is skipped when empty so plus-loops evaluate at lambda = 0.
        let mut pos = ZERO_C;
        for k in (0..=self.n as i64).rev() {
            pos = pos * lambda + self.coeff(k);
        }
        if self.neg_mass() == 0.0 {
            return pos;
        }
        let mut neg = ZERO_C;
        let li = lambda.inv();
        for k in (1..=self.n as i64).rev() {
            neg = neg * li + self.coeff(-k);
        }
        pos + neg * li
    }

    pub fn eval_circle(&self, m: usize) -> Vec<C64> {
        let w = twiddles(m);
        (0..m)
            .map(|j| {
                let mut acc = ZERO_C;
                for k in -(self.n as i64)..=(self.n as i64) {
                    let idx = (k * j as i64).rem_euclid(m as i64) as usize;
                    acc += self.coeff(k) * w[idx];
                }
                acc
            })
            .collect()
    }

    /// Inverse discrete Fourier transform of circle samples, truncated to order n.
    pub fn from_samples(n: usize, samples: &[C64]) -> Self {
        let m = samples.len();
        let w = twiddles(m);
        let mut out = Self::zero(n);
        for k in -(n as i64)..=(n as i64) {
            let mut acc = ZERO_C;
            for (j, s) in samples.iter().enumerate() {
                let idx = (-k * j as i64).rem_euclid(m as i64) as usize;
                acc += s * w[idx];
            }
            out.set(k, acc / m as f64);
        }
        out
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::OrderMismatch(self.n, other.n));
        }
        let n = self.n as i64;
        let mut out = Self::zero(self.n);
        let mut dropped = 0.0;
        for k in -2 * n..=2 * n {
            let mut acc = ZERO_C;
            let lo = (-n).max(k - n);
            let hi = n.min(k + n);
            for i in lo..=hi {
                acc += self.coeff(i) * other.coeff(k - i);
            }
            if k.unsigned_abs() as usize <= self.n {
                out.set(k, acc);
            } else {
                dropped += acc.norm();
            }
        }
        if dropped > 0.0 {
            let scale = self.abs_mass() * other.abs_mass() + f64::MIN_POSITIVE;
            tail_add(dropped / scale);
        }
        Ok(out)
    }

    /// Pointwise reciprocal on the circle, transformed back to coefficients.
    pub fn inverse(&self, min_abs: f64) -> Result<Self> {
        let m = sample_count(self.n);
        let vals = self.eval_circle(m);
        let minimum = vals.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if minimum < min_abs {
            return Err(Error::DivisionBySmall(minimum));
        }
        let inv: Vec<C64> = vals.iter().map(|v| v.inv()).collect();
        Ok(Self::from_samples(self.n, &inv))
    }

    /// Pointwise quotient self / denom on the circle.
    pub fn divide(&self, denom: &Self, min_abs: f64) -> Result<Self> {
        if self.n != denom.n {
            return Err(Error::OrderMismatch(self.n, denom.n));
        }
        let m = sample_count(self.n);
        let num = self.eval_circle(m);
        let den = denom.eval_circle(m);
        let minimum = den.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if minimum < min_abs {
            return Err(Error::DivisionBySmall(minimum));
        }
        let vals: Vec<C64> = num.iter().zip(&den).map(|(a, b)| a / b).collect();
        Ok(Self::from_samples(self.n, &vals))
    }

    /// Divide by the linear factor (lambda - root). Returns the quotient and
    /// the absolute remainder (nonzero when the root is not an exact zero).
    /// Roots outside the unit circle are handled through the reflected
    /// series, keeping the synthetic-division carry contractive.
    pub fn divide_root(&self, root: C64) -> (Self, f64) {
        if root.norm() > 1.0 {
            // p(1/l) = -(root/l)(l - 1/root) q(1/l) + rem: divide the
            // reflection by the reciprocal root and map back.
            let reflected = self.reflect();
            let (u, rem) = reflected.divide_root_inside(root.inv());
            // q(1/l) = -l u(l) / root, so q_k = -u_{-k-1} / root.
            let mut q = Self::zero(self.n);
            for k in -(self.n as i64)..=(self.n as i64 - 1) {
                q.set(k, -u.coeff(-k - 1) / root);
            }
            (q, rem)
        } else {
            self.divide_root_inside(root)
        }
    }

    fn divide_root_inside(&self, root: C64) -> (Self, f64) {
        // Write f = lambda^{-n} p(lambda) with p a polynomial of degree 2n,
        // then run synthetic division p = (lambda - root) q + rem from the top.
        let deg = 2 * self.n;
        let p: Vec<C64> = (0..=deg as i64)
            .map(|j| self.coeff(j - self.n as i64))
            .collect();
        let mut q = vec![ZERO_C; deg];
        let mut carry = ZERO_C;
        let mut rem = ZERO_C;
        for j in (0..=deg).rev() {
            let v = p[j] + carry;
            if j == 0 {
                rem = v;
                break;
            }
            q[j - 1] = v;
            carry = v * root;
        }
        // q has powers lambda^{j - n} for j in 0..deg: support [-n, n-1].
        let mut out = Self::zero(self.n);
        for (j, c) in q.iter().enumerate() {
            out.set(j as i64 - self.n as i64, *c);
        }
        (out, rem.norm())
    }

    /// The reflection lambda -> 1/lambda on coefficients.
    pub fn reflect(&self) -> Self {
        let mut out = Self::zero(self.n);
        for k in -(self.n as i64)..=(self.n as i64) {
            out.set(k, self.coeff(-k));
        }
        out
    }

    pub fn conj_reflect(&self) -> Self {
        // (f*)_k = conj(f_{-k}): the adjoint rule restricted to scalars.
        let mut out = Self::zero(self.n);
        for k in -(self.n as i64)..=(self.n as i64) {
            out.set(k, self.coeff(-k).conj());
        }
        out
    }

    pub fn rho_norm(&self, rho: f64) -> f64 {
        (-(self.n as i64)..=(self.n as i64))
            .map(|k| self.coeff(k).norm() * rho.powi(k.unsigned_abs() as i32))
            .sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            n: self.n,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::OrderMismatch(self.n, other.n));
        }
        Ok(Self {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-ONE_C))
    }

    /// Maximum coefficient modulus over negative powers: zero for a plus-loop.
    pub fn neg_mass(&self) -> f64 {
        (1..=self.n as i64).map(|k| self.coeff(-k).norm()).sum()
    }

    pub fn is_plus(&self, tol: f64) -> bool {
        self.neg_mass() <= tol
    }
}

// ---------------------------------------------------------------------------
// Matrix loops

/// Truncated 2x2-matrix Laurent series; all entries share one truncation order.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopMat {
    n: usize,
    coeffs: Vec<Mat2>,
}

impl LoopMat {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            coeffs: vec![Mat2::zero(); 2 * n + 1],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(n, Mat2::identity())
    }

    pub fn constant(n: usize, m: Mat2) -> Self {
        let mut out = Self::zero(n);
        out.set_coeff(0, m);
        out
    }

    pub fn from_terms(n: usize, terms: &[(i64, Mat2)]) -> Self {
        let mut out = Self::zero(n);
        for &(k, m) in terms {
            out.set_coeff(k, out.coeff(k) + m);
        }
        out
    }

    /// Assemble from four scalar entries. All must share the same order.
    pub fn from_entries(
        a: &LoopScalar,
        b: &LoopScalar,
        c: &LoopScalar,
        d: &LoopScalar,
    ) -> Result<Self> {
        let n = a.order();
        for s in [b, c, d] {
            if s.order() != n {
                return Err(Error::OrderMismatch(n, s.order()));
            }
        }
        let mut out = Self::zero(n);
        for k in -(n as i64)..=(n as i64) {
            out.set_coeff(k, Mat2::new(a.coeff(k), b.coeff(k), c.coeff(k), d.coeff(k)));
        }
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, k: i64) -> Mat2 {
        if k.unsigned_abs() as usize > self.n {
            Mat2::zero()
        } else {
            self.coeffs[(k + self.n as i64) as usize]
        }
    }

    pub fn set_coeff(&mut self, k: i64, m: Mat2) {
        assert!(
            k.unsigned_abs() as usize <= self.n,
            "coefficient index {k} out of range for order {}",
            self.n
        );
        self.coeffs[(k + self.n as i64) as usize] = m;
    }

    pub fn entry(&self, row: usize, col: usize) -> LoopScalar {
        let mut out = LoopScalar::zero(self.n);
        for k in -(self.n as i64)..=(self.n as i64) {
            let m = self.coeff(k);
            let v = match (row, col) {
                (0, 0) => m.a,
                (0, 1) => m.b,
                (1, 0) => m.c,
                (1, 1) => m.d,
                _ => panic!("entry index out of range"),
            };
            out.set(k, v);
        }
        out
    }

    pub fn resize(&self, n: usize) -> Self {
        let mut out = Self::zero(n);
        let mut dropped = 0.0;
        for k in -(self.n as i64)..=(self.n as i64) {
            if k.unsigned_abs() as usize <= n {
                out.set_coeff(k, self.coeff(k));
            } else {
                dropped += self.coeff(k).norm();
            }
        }
        if dropped > 0.0 {
            tail_add(dropped / (self.abs_mass() + f64::MIN_POSITIVE));
        }
        out
    }

    fn abs_mass(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            n: self.n,
            coeffs: self.coeffs.iter().map(|c| c.scale(s)).collect(),
        }
    }

    pub fn scale_scalar(&self, s: &LoopScalar) -> Result<Self> {
        if self.n != s.order() {
            return Err(Error::OrderMismatch(self.n, s.order()));
        }
        let n = self.n as i64;
        let mut out = Self::zero(self.n);
        let mut dropped = 0.0;
        for k in -2 * n..=2 * n {
            let mut acc = Mat2::zero();
            let lo = (-n).max(k - n);
            let hi = n.min(k + n);
            for i in lo..=hi {
                acc = acc + self.coeff(i).scale(s.coeff(k - i));
            }
            if k.unsigned_abs() as usize <= self.n {
                out.set_coeff(k, acc);
            } else {
                dropped += acc.norm();
            }
        }
        if dropped > 0.0 {
            tail_add(dropped / (self.abs_mass() * (s.abs_mass() + 1e-300) + f64::MIN_POSITIVE));
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::OrderMismatch(self.n, other.n));
        }
        Ok(Self {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| *a + *b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-ONE_C))
    }

    /// Coefficient-space convolution truncated back to the shared order.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::OrderMismatch(self.n, other.n));
        }
        let n = self.n as i64;
        let mut out = Self::zero(self.n);
        let mut dropped = 0.0;
        for k in -2 * n..=2 * n {
            let mut acc = Mat2::zero();
            let lo = (-n).max(k - n);
            let hi = n.min(k + n);
            for i in lo..=hi {
                acc = acc + self.coeff(i) * other.coeff(k - i);
            }
            if k.unsigned_abs() as usize <= self.n {
                out.set_coeff(k, acc);
            } else {
                dropped += acc.norm();
            }
        }
        if dropped > 0.0 {
            let scale = self.abs_mass() * other.abs_mass() + f64::MIN_POSITIVE;
            tail_add(dropped / scale);
        }
        Ok(out)
    }

    pub fn det(&self) -> LoopScalar {
        // ad - bc, kept at the shared order (tail recorded by the products).
        let a = self.entry(0, 0);
        let b = self.entry(0, 1);
        let c = self.entry(1, 0);
        let d = self.entry(1, 1);
        let ad = a.product(&d).expect("orders match");
        let bc = b.product(&c).expect("orders match");
        ad.sub(&bc).expect("orders match")
    }

    /// Inverse: adjugate divided by determinant. When the determinant is 1
    /// within `unit_det_tol` on the circle the division is skipped entirely
    /// and the adjugate is returned (exact for unit-determinant loops).
    pub fn inverse(&self) -> Result<Self> {
        let m = sample_count(self.n);
        let det_vals: Vec<C64> = self.eval_circle(m).iter().map(|v| v.det()).collect();
        let min_det = det_vals.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if min_det < 1e-13 {
            return Err(Error::DivisionBySmall(min_det));
        }
        let max_dev = det_vals
            .iter()
            .map(|v| (v - ONE_C).norm())
            .fold(0.0, f64::max);
        let adj = self.adjugate_loop();
        if max_dev < 1e-12 {
            return Ok(adj);
        }
        let samples = adj.eval_circle(m);
        let vals: Vec<Mat2> = samples
            .iter()
            .zip(&det_vals)
            .map(|(s, d)| s.scale(d.inv()))
            .collect();
        Ok(Self::from_samples(self.n, &vals))
    }

    fn adjugate_loop(&self) -> Self {
        let mut out = Self::zero(self.n);
        for k in -(self.n as i64)..=(self.n as i64) {
            out.set_coeff(k, self.coeff(k).adjugate());
        }
        out
    }

    /// The circle adjoint A*(lambda) = A(lambda)^dagger for |lambda| = 1:
    /// coefficient rule (A*)_k = (A_{-k})^dagger.
    pub fn circle_adjoint(&self) -> Self {
        let mut out = Self::zero(self.n);
        for k in -(self.n as i64)..=(self.n as i64) {
            out.set_coeff(k, self.coeff(-k).adjoint());
        }
        out
    }

    pub fn rho_norm(&self, rho: f64) -> f64 {
        (-(self.n as i64)..=(self.n as i64))
            .map(|k| self.coeff(k).norm() * rho.powi(k.unsigned_abs() as i32))
            .sum()
    }

    /// Laurent evaluation; valid on the annulus 1/rho <= |lambda| <= rho.
    /// Plus-loops also evaluate at lambda = 0.
    pub fn eval(&self, lambda: C64) -> Mat2 {
        let mut pos = Mat2::zero();
        for k in (0..=self.n as i64).rev() {
            pos = pos.scale(lambda) + self.coeff(k);
        }
        if self.neg_mass() == 0.0 {
            return pos;
        }
        let mut neg = Mat2::zero();
        let li = lambda.inv();
        for k in (1..=self.n as i64).rev() {
            neg = neg.scale(li) + self.coeff(-k);
        }
        pos + neg.scale(li)
    }

    /// Guarded evaluation that enforces the annulus precondition.
    pub fn eval_in_annulus(&self, lambda: C64, rho: f64) -> Result<Mat2> {
        let r = lambda.norm();
        if r < 1.0 / rho - 1e-12 || r > rho + 1e-12 {
            return Err(Error::OutsideAnnulus(r, rho));
        }
        Ok(self.eval(lambda))
    }

    pub fn eval_circle(&self, m: usize) -> Vec<Mat2> {
        let w = twiddles(m);
        (0..m)
            .map(|j| {
                let mut acc = Mat2::zero();
                for k in -(self.n as i64)..=(self.n as i64) {
                    let idx = (k * j as i64).rem_euclid(m as i64) as usize;
                    acc = acc + self.coeff(k).scale(w[idx]);
                }
                acc
            })
            .collect()
    }

    pub fn from_samples(n: usize, samples: &[Mat2]) -> Self {
        let m = samples.len();
        let w = twiddles(m);
        let mut out = Self::zero(n);
        for k in -(n as i64)..=(n as i64) {
            let mut acc = Mat2::zero();
            for (j, s) in samples.iter().enumerate() {
                let idx = (-k * j as i64).rem_euclid(m as i64) as usize;
                acc = acc + s.scale(w[idx]);
            }
            out.set_coeff(k, acc.scale(ONE_C / m as f64));
        }
        out
    }

    /// Exponential, computed pointwise on the sample circle and transformed back.
    pub fn exp(&self) -> Self {
        let m = sample_count(self.n);
        let vals: Vec<Mat2> = self.eval_circle(m).iter().map(|v| v.exp()).collect();
        Self::from_samples(self.n, &vals)
    }

    /// Principal logarithm per circle sample with an eigenvalue-argument
    /// continuity check between adjacent samples.
    pub fn log(&self) -> Result<Self> {
        let m = sample_count(self.n);
        let samples = self.eval_circle(m);
        let mut logs = Vec::with_capacity(m);
        let mut prev_args: Option<(f64, f64)> = None;
        for (j, v) in samples.iter().enumerate() {
            let (l1, l2) = v.eigenvalues();
            let (a1, a2) = (l1.arg(), l2.arg());
            if let Some((p1, p2)) = prev_args {
                // Match eigenvalues to the previous sample by argument distance.
                let direct = (a1 - p1).abs().max((a2 - p2).abs());
                let swapped = (a2 - p1).abs().max((a1 - p2).abs());
                let jump = direct.min(swapped);
                if jump > PI / 2.0 {
                    return Err(Error::LogBranch(format!(
                        "eigenvalue argument jump {jump:.3} > pi/2 between samples {} and {j}",
                        j - 1
                    )));
                }
                prev_args = if direct <= swapped {
                    Some((a1, a2))
                } else {
                    Some((a2, a1))
                };
            } else {
                prev_args = Some((a1, a2));
            }
            logs.push(v.log()?);
        }
        Ok(Self::from_samples(self.n, &logs))
    }

    /// Pointwise Hermitian square root on the circle (for loops whose circle
    /// values are Hermitian positive definite).
    pub fn sqrt_hermitian(&self) -> Result<Self> {
        let m = sample_count(self.n);
        let vals = self
            .eval_circle(m)
            .iter()
            .map(|v| v.hermitize().sqrt_hermitian())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_samples(self.n, &vals))
    }

    /// Largest negative-power coefficient mass; zero for a plus-loop.
    pub fn neg_mass(&self) -> f64 {
        (1..=self.n as i64).map(|k| self.coeff(-k).norm()).sum()
    }

    pub fn is_plus(&self, tol: f64) -> bool {
        self.neg_mass() <= tol
    }

    /// Frobenius distance between truncated loops, coefficientwise.
    pub fn dist(&self, other: &Self) -> f64 {
        let n = self.n.max(other.n) as i64;
        (-n..=n)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .sum()
    }
}
