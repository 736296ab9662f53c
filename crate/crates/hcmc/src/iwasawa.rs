//! Loop-group Iwasawa decomposition Phi = F B: F unitary on the circle, B a
//! plus-loop whose constant term is upper triangular with positive diagonal.
//!
//! The positive factor comes from Bauer's finite-section method: the block
//! Toeplitz matrix of Fourier blocks of G = Phi* Phi is factored by Cholesky
//! and the factor's deep rows converge to the coefficients of the outer B.

use crate::error::{Error, Result};
use crate::loops::{sample_count, LoopMat};
use crate::mat2::{C64, Mat2, ONE_C, ZERO_C};

#[derive(Clone, Copy, Debug)]
pub struct IwasawaConfig {
    /// Bauer finite-section depth: blocks per side. Default 4N.
    pub section: usize,
    /// rho used for the reported residual norm.
    pub rho: f64,
}

impl IwasawaConfig {
    pub fn for_order(n: usize, rho: f64) -> Self {
        Self {
            section: 4 * n,
            rho,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IwasawaPair {
    /// Unitary-on-circle factor.
    pub f: LoopMat,
    /// Positive factor: plus-loop, constant term upper triangular with
    /// positive diagonal, unit determinant.
    pub b: LoopMat,
    /// || Phi - F B ||_rho measured at the internal working order.
    pub residual: f64,
}

/// Upper Cholesky T = R* R of a Hermitian positive definite matrix stored
/// row-major. Returns R (upper triangular, positive real diagonal).
fn cholesky_upper(t: &mut [C64], dim: usize) -> Result<()> {
    for i in 0..dim {
        let mut diag = t[i * dim + i];
        for k in 0..i {
            let r = t[k * dim + i];
            diag -= r.conj() * r;
        }
        if diag.re <= 0.0 || diag.re.is_nan() {
            return Err(Error::NotPositive {
                pivot: i,
                value: diag.re,
            });
        }
        let rii = diag.re.sqrt();
        t[i * dim + i] = C64::new(rii, 0.0);
        for j in (i + 1)..dim {
            let mut v = t[i * dim + j];
            for k in 0..i {
                v -= t[k * dim + i].conj() * t[k * dim + j];
            }
            t[i * dim + j] = v / rii;
        }
        for j in 0..i {
            t[i * dim + j] = ZERO_C;
        }
    }
    Ok(())
}

/// Spectral factorization of a loop G that is Hermitian positive definite on
/// the circle: returns the plus-loop B with B* B = G, constant term upper
/// triangular with positive diagonal, determinant renormalized to 1.
pub fn spectral_factor(g: &LoopMat, section: usize) -> Result<LoopMat> {
    let n = g.order();
    let blocks = section + 1;
    let dim = 2 * blocks;
    // T[i, j] = G_{j - i} blockwise.
    let mut t = vec![ZERO_C; dim * dim];
    for bi in 0..blocks {
        for bj in 0..blocks {
            let gk = g.coeff(bj as i64 - bi as i64);
            let (r, c) = (2 * bi, 2 * bj);
            t[r * dim + c] = gk.a;
            t[r * dim + c + 1] = gk.b;
            t[(r + 1) * dim + c] = gk.c;
            t[(r + 1) * dim + c + 1] = gk.d;
        }
    }
    cholesky_upper(&mut t, dim)?;
    // Deep rows of R converge to the factor; read the last row that still has
    // the full coefficient width.
    if section < n {
        return Err(Error::PositiveFactor(format!(
            "section {section} shorter than loop order {n}"
        )));
    }
    let anchor = section - n;
    let mut b = LoopMat::zero(n);
    for k in 0..=n {
        let (r, c) = (2 * anchor, 2 * (anchor + k));
        b.set_coeff(
            k as i64,
            Mat2::new(
                t[r * dim + c],
                t[r * dim + c + 1],
                t[(r + 1) * dim + c],
                t[(r + 1) * dim + c + 1],
            ),
        );
    }
    renormalize_det(&b)
}

/// Force det B = 1 by dividing by the scalar outer square root of det B.
fn renormalize_det(b: &LoopMat) -> Result<LoopMat> {
    let n = b.order();
    let m = sample_count(n);
    let samples = b.eval_circle(m);
    let dets: Vec<C64> = samples.iter().map(|s| s.det()).collect();
    let d0: C64 = dets.iter().sum::<C64>() / m as f64;
    if (d0 - ONE_C).norm() > 1e-6 {
        return Err(Error::PositiveFactor(format!(
            "det B constant term {d0:.8} too far from 1"
        )));
    }
    let max_dev = dets.iter().map(|d| (d - ONE_C).norm()).fold(0.0, f64::max);
    if max_dev < 1e-14 {
        return Ok(b.clone());
    }
    let scaled: Vec<Mat2> = samples
        .iter()
        .zip(&dets)
        .map(|(s, d)| {
            // principal square root: det stays near 1, no cut crossing
            s.scale(d.sqrt().inv())
        })
        .collect();
    Ok(LoopMat::from_samples(n, &scaled))
}

/// Iwasawa decomposition of a unit-determinant loop.
pub fn iwasawa(phi: &LoopMat, cfg: &IwasawaConfig) -> Result<IwasawaPair> {
    let n = phi.order();
    let n2 = 2 * n;
    let phi2 = phi.resize(n2);
    let g = phi2.circle_adjoint().product(&phi2)?;
    let b2 = spectral_factor(&g, cfg.section.max(n2))?;
    // B has unit determinant, so its inverse is the adjugate.
    let f2 = phi2.product(&b2.inverse()?)?;
    let residual = phi2.sub(&f2.product(&b2)?)?.rho_norm(cfg.rho);
    let f = f2.resize(n);
    let b = b2.resize(n);
    Ok(IwasawaPair { f, b, residual })
}

/// The positive metric entry b(z): upper-left entry of B at lambda = 0.
pub fn b_metric_entry(b: &LoopMat) -> Result<f64> {
    let e = b.coeff(0).a;
    if e.im.abs() > 1e-8 * (1.0 + e.norm()) || e.re <= 0.0 {
        return Err(Error::PositiveFactor(format!(
            "constant-term upper-left entry {e:.6e} not positive real"
        )));
    }
    Ok(e.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::LoopScalar;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Spherical holomorphic frame Phi_S(z) = [[1, z/lambda], [0, 1]].
    pub fn sphere_frame(n: usize, z: C64) -> LoopMat {
        LoopMat::from_terms(
            n,
            &[
                (0, Mat2::identity()),
                (-1, Mat2::new(ZERO_C, z, ZERO_C, ZERO_C)),
            ],
        )
    }

    /// The closed-form unitary factor of the spherical frame.
    pub fn sphere_unitary(n: usize, z: C64) -> LoopMat {
        let s = 1.0 / (1.0 + z.norm_sqr()).sqrt();
        LoopMat::from_terms(
            n,
            &[
                (0, Mat2::identity().scale(c(s, 0.0))),
                (-1, Mat2::new(ZERO_C, z * s, ZERO_C, ZERO_C)),
                (1, Mat2::new(ZERO_C, ZERO_C, -z.conj() * s, ZERO_C)),
            ],
        )
    }

    fn sphere_positive(n: usize, z: C64) -> LoopMat {
        let s = 1.0 / (1.0 + z.norm_sqr()).sqrt();
        LoopMat::from_terms(
            n,
            &[
                (0, Mat2::new(c(s, 0.0), ZERO_C, ZERO_C, c(1.0 / s, 0.0))),
                (1, Mat2::new(ZERO_C, ZERO_C, z.conj() * s, ZERO_C)),
            ],
        )
    }

    #[test]
    fn identity_decomposes_trivially() {
        let pair = iwasawa(&LoopMat::identity(8), &IwasawaConfig::for_order(8, 2.0)).unwrap();
        assert!(pair.f.dist(&LoopMat::identity(8)) < 1e-12);
        assert!(pair.b.dist(&LoopMat::identity(8)) < 1e-12);
        assert!(pair.residual < 1e-12);
    }

    #[test]
    fn sphere_frame_matches_closed_form() {
        let n = 8;
        let cfg = IwasawaConfig::for_order(n, 2.0);
        for z in [c(0.3, 0.0), c(-0.7, 1.1), c(1.9, -0.4), c(0.0, 0.0)] {
            let pair = iwasawa(&sphere_frame(n, z), &cfg).unwrap();
            let want_f = sphere_unitary(n, z);
            let want_b = sphere_positive(n, z);
            assert!(
                pair.f.dist(&want_f) < 1e-10,
                "F mismatch at z = {z}: {:.3e}",
                pair.f.dist(&want_f)
            );
            assert!(pair.b.dist(&want_b) < 1e-10);
            assert!(pair.residual < 1e-10);
        }
    }

    #[test]
    fn unitary_input_passes_through() {
        let n = 8;
        let phi = sphere_unitary(n, c(0.8, -0.3));
        let pair = iwasawa(&phi, &IwasawaConfig::for_order(n, 2.0)).unwrap();
        assert!(pair.b.dist(&LoopMat::identity(n)) < 1e-10);
        assert!(pair.f.dist(&phi) < 1e-10);
    }

    #[test]
    fn invariants_on_delaunay_frame() {
        // z^{A_{r,s}} at a few points along the real ray.
        let n = 12;
        let q: f64 = 0.5;
        let s = 0.1;
        let ch = q.cosh();
        let r = -s * ch + (s * s * ch * ch - s * s + 0.25).sqrt();
        let a = LoopMat::from_terms(
            n,
            &[
                (0, Mat2::from_real(0.0, s, s, 0.0)),
                (-1, Mat2::from_real(0.0, r, 0.0, 0.0)),
                (1, Mat2::from_real(0.0, 0.0, r, 0.0)),
            ],
        );
        let cfg = IwasawaConfig::for_order(n, 2.0);
        for x in [0.5f64, 1.0, 2.2, 5.0] {
            let phi = a.scale(c(x.ln(), 0.0)).exp();
            let pair = iwasawa(&phi, &cfg).unwrap();
            // F unitary on the circle
            let uu = pair.f.product(&pair.f.circle_adjoint()).unwrap();
            assert!(uu.dist(&LoopMat::identity(n)) < 1e-9, "x = {x}");
            // B plus-loop with positive upper-left constant entry
            assert!(pair.b.is_plus(1e-10));
            assert!(b_metric_entry(&pair.b).is_ok());
            // B0 upper triangular
            assert!(pair.b.coeff(0).c.norm() < 1e-10);
            assert!(pair.residual < 1e-8, "residual {} at x = {x}", pair.residual);
            // det F = det B = 1 as scalars
            let det_f = pair.f.det();
            let dev: f64 = (-(n as i64)..=n as i64)
                .map(|k| {
                    (det_f.coeff(k) - if k == 0 { ONE_C } else { ZERO_C }).norm()
                })
                .sum();
            assert!(dev < 1e-9);
        }
    }

    #[test]
    fn equivariance_under_unitary_dressing() {
        let n = 8;
        let cfg = IwasawaConfig::for_order(n, 2.0);
        let phi = sphere_frame(n, c(0.6, 0.9));
        // U: constant unitary rotation times a lambda shear in su(2)
        let u = {
            let x = LoopMat::from_terms(
                n,
                &[
                    (1, Mat2::new(ZERO_C, c(0.2, 0.1), ZERO_C, ZERO_C)),
                    (-1, Mat2::new(ZERO_C, ZERO_C, c(-0.2, 0.1), ZERO_C)),
                    (0, Mat2::new(c(0.0, 0.3), ZERO_C, ZERO_C, c(0.0, -0.3))),
                ],
            );
            x.exp()
        };
        let pair0 = iwasawa(&phi, &cfg).unwrap();
        let pair1 = iwasawa(&u.product(&phi).unwrap(), &cfg).unwrap();
        let want_f = u.product(&pair0.f).unwrap();
        assert!(pair1.f.dist(&want_f) < 1e-9);
        assert!(pair1.b.dist(&pair0.b) < 1e-9);
    }

    #[test]
    fn gauge_invariance_of_unitary_part() {
        // Multiplying by a plus-loop with upper-triangular positive-diagonal
        // constant term changes only B.
        let n = 8;
        let cfg = IwasawaConfig::for_order(n, 2.0);
        let phi = sphere_frame(n, c(-0.4, 0.5));
        // exp of a trace-free plus-loop with upper-triangular real-diagonal
        // constant term lands in the positive gauge group exactly.
        let p = LoopMat::from_terms(
            n,
            &[
                (0, Mat2::new(c(0.18, 0.0), c(0.3, 0.1), ZERO_C, c(-0.18, 0.0))),
                (1, Mat2::new(c(0.05, 0.0), c(0.02, -0.04), c(0.1, -0.2), c(-0.05, 0.0))),
            ],
        )
        .exp();
        let pair0 = iwasawa(&phi, &cfg).unwrap();
        let pair1 = iwasawa(&phi.product(&p).unwrap(), &cfg).unwrap();
        assert!(pair1.f.dist(&pair0.f) < 1e-9);
    }

    #[test]
    fn roundtrip_from_random_positive_factor() {
        let n = 6;
        // A plus-loop B0 with normalized constant term.
        let b0 = LoopMat::from_terms(
            n,
            &[
                (0, Mat2::new(c(1.1, 0.0), c(0.2, -0.3), ZERO_C, c(1.0 / 1.1, 0.0))),
                (1, Mat2::new(c(0.08, 0.02), c(-0.05, 0.0), c(0.12, 0.07), c(-0.02, 0.03))),
                (2, Mat2::new(c(0.01, -0.02), c(0.03, 0.01), c(0.0, 0.02), c(0.015, 0.0))),
            ],
        );
        // Renormalize det to 1 so the target is an exact positive factor.
        let b0 = renormalize_det(&b0).unwrap();
        let g = b0.circle_adjoint().product(&b0).unwrap();
        let b = spectral_factor(&g, 4 * n).unwrap();
        assert!(
            b.dist(&b0) < 1e-8,
            "roundtrip distance {:.3e}",
            b.dist(&b0)
        );
    }

    #[test]
    fn refinement_stability() {
        // Doubling order and section moves F by < 1e-8 pointwise.
        let q: f64 = 0.5;
        let s = 0.12;
        let ch = q.cosh();
        let r = -s * ch + (s * s * ch * ch - s * s + 0.25).sqrt();
        let frame = |n: usize, x: f64| {
            let a = LoopMat::from_terms(
                n,
                &[
                    (0, Mat2::from_real(0.0, s, s, 0.0)),
                    (-1, Mat2::from_real(0.0, r, 0.0, 0.0)),
                    (1, Mat2::from_real(0.0, 0.0, r, 0.0)),
                ],
            );
            a.scale(c(x.ln(), 0.0)).exp()
        };
        let x = 1.7;
        let f1 = iwasawa(&frame(8, x), &IwasawaConfig::for_order(8, 2.0))
            .unwrap()
            .f;
        let f2 = iwasawa(&frame(16, x), &IwasawaConfig::for_order(16, 2.0))
            .unwrap()
            .f;
        for j in 0..16 {
            let lam = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / 16.0);
            assert!(
                (f1.eval(lam) - f2.eval(lam)).norm() < 1e-8,
                "lambda sample {j}"
            );
        }
    }

    #[test]
    fn scalar_loop_determinant_check() {
        // LoopScalar sanity used by the renormalization: det of B equals 1.
        let n = 6;
        let b0 = LoopMat::from_terms(
            n,
            &[
                (0, Mat2::new(c(1.3, 0.0), c(0.1, 0.0), ZERO_C, c(1.0 / 1.3, 0.0))),
                (1, Mat2::new(c(0.05, 0.01), ZERO_C, c(0.07, 0.0), ZERO_C)),
            ],
        );
        let b = renormalize_det(&b0).unwrap();
        let det = b.det();
        let one = LoopScalar::one(n);
        assert!(det.sub(&one).unwrap().rho_norm(1.0) < 1e-10);
    }
}
