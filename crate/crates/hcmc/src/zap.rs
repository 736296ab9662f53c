//! Frobenius normal form Phi = M z^A P(z) of perturbed Delaunay frames near
//! the regular singular point, the resonance-safe first Taylor coefficient,
//! the second-order admissible gauge, and the unitary/commuting split M = U K.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::loops::{sample_count, LoopMat, LoopScalar};
use crate::mat2::{Mat2, ONE_C, ZERO_C};
use crate::potentials::{DelaunayParams, Potential};

#[derive(Clone, Copy, Debug)]
pub struct ZapConfig {
    /// Taylor order K of P(z) = I + P^1 z + ... + P^K z^K.
    pub taylor_order: usize,
    /// Radius of the Cauchy circle for the perturbation coefficients.
    pub cauchy_radius: f64,
    /// Samples on the Cauchy circle.
    pub cauchy_samples: usize,
    /// Probe point for M extraction, as a fraction of the Cauchy radius.
    pub probe_factor: f64,
    /// Relative deflation remainder above which the monodromy problem is
    /// declared unsolved.
    pub deflation_tol: f64,
}

impl Default for ZapConfig {
    fn default() -> Self {
        Self {
            taylor_order: 6,
            cauchy_radius: 0.05,
            cauchy_samples: 64,
            probe_factor: 0.1,
            deflation_tol: 1e-8,
        }
    }
}

/// The normal form data near z = 0.
#[derive(Clone)]
pub struct ZapForm {
    pub params: DelaunayParams,
    pub n: usize,
    /// M_t with Phi = M z^A P(z).
    pub m: LoopMat,
    /// P^0 .. P^K.
    pub p: Vec<LoopMat>,
    /// Taylor coefficients C_0 .. C_{K-1} of the perturbation.
    pub c: Vec<LoopMat>,
    /// Smallest |k - 2 mu| met while inverting the homological operators.
    pub min_resonance_gap: f64,
    /// Relative remainder of the resonance deflation.
    pub deflation_remainder: f64,
}

impl ZapForm {
    /// z^A = exp(A log z), principal branch.
    pub fn z_pow_a(&self, z: C64) -> LoopMat {
        self.params.residue(self.n).scale(z.ln()).exp()
    }

    pub fn p_at(&self, z: C64) -> LoopMat {
        let mut acc = LoopMat::zero(self.n);
        for pk in self.p.iter().rev() {
            acc = acc.scale(z).add(pk).expect("orders match");
        }
        acc
    }

    /// The normal form M z^A P(z).
    pub fn frame_at(&self, z: C64) -> Result<LoopMat> {
        self.m.product(&self.z_pow_a(z))?.product(&self.p_at(z))
    }

    /// The comparison Delaunay frame M z^A.
    pub fn comparison_frame_at(&self, z: C64) -> Result<LoopMat> {
        self.m.product(&self.z_pow_a(z))
    }
}

fn circle_points(m: usize) -> Vec<C64> {
    (0..m)
        .map(|j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64))
        .collect()
}

/// Extract the Taylor coefficients of C(z) = xi(z) - A/z by Cauchy integrals.
fn perturbation_coefficients(
    params: &DelaunayParams,
    pot: &dyn Potential,
    cfg: &ZapConfig,
    n: usize,
) -> Result<Vec<LoopMat>> {
    let mz = cfg.cauchy_samples;
    let rc = cfg.cauchy_radius;
    let mut samples = Vec::with_capacity(mz);
    for j in 0..mz {
        let z = C64::from_polar(rc, 2.0 * std::f64::consts::PI * j as f64 / mz as f64);
        let xi = pot.eval(z)?;
        let c = xi.sub(&params.residue(n).scale(z.inv()))?;
        samples.push(c);
    }
    let mut out = Vec::with_capacity(cfg.taylor_order);
    for k in 0..cfg.taylor_order {
        let mut acc = LoopMat::zero(n);
        for (j, s) in samples.iter().enumerate() {
            let th = 2.0 * std::f64::consts::PI * j as f64 * k as f64 / mz as f64;
            acc = acc
                .add(&s.scale(C64::from_polar(rc.powi(-(k as i32)) / mz as f64, -th)))
                .expect("orders match");
        }
        out.push(acc);
    }
    Ok(out)
}

/// Solve L_{t,k}(X) = [A, X] + k X = Y in the diagonalizing basis, pointwise
/// on the circle. Returns the solution and the resonance gap encountered.
fn invert_homological(
    params: &DelaunayParams,
    k: usize,
    y: &LoopMat,
    n: usize,
) -> Result<(LoopMat, f64)> {
    let m = sample_count(n);
    let pts = circle_points(m);
    let mut vals = Vec::with_capacity(m);
    let mut gap = f64::INFINITY;
    for lam in &pts {
        let h = params.diagonalizer_at(*lam);
        let hinv = h.adjugate();
        let mu = params.mu_at(*lam);
        let yb = hinv * y.eval(*lam) * h;
        let kf = k as f64;
        let d_plus = kf + 2.0 * mu.re;
        let d_minus = kf - 2.0 * mu.re;
        gap = gap.min(d_minus.abs());
        if d_minus.abs() < 0.05 {
            return Err(Error::Resonance(d_minus.abs(), k));
        }
        let xb = Mat2::new(
            yb.a / kf,
            yb.b / (kf + 2.0 * mu),
            yb.c / (kf - 2.0 * mu),
            yb.d / kf,
        );
        let _ = d_plus;
        vals.push(h * xb * hinv);
    }
    Ok((LoopMat::from_samples(n, &vals), gap))
}

/// The resonance-safe first Taylor coefficient: the X3 component of C(0) is
/// divided by (1 - 2 mu) after both sides are deflated by
/// (lambda - e^q)(lambda - e^{-q}), the common root pair forced by the solved
/// monodromy problem.
fn first_coefficient(
    params: &DelaunayParams,
    c0: &LoopMat,
    c_scale: f64,
    n: usize,
    deflation_tol: f64,
) -> Result<(LoopMat, f64)> {
    let m = sample_count(n);
    let pts = circle_points(m);

    // Components of C(0) in the diagonalizing basis, as scalar loops.
    let mut comp = vec![Vec::with_capacity(m); 4];
    for lam in &pts {
        let h = params.diagonalizer_at(*lam);
        let cb = h.adjugate() * c0.eval(*lam) * h;
        comp[0].push(cb.a);
        comp[1].push(cb.b);
        comp[2].push(cb.c);
        comp[3].push(cb.d);
    }
    let comp: Vec<LoopScalar> = comp
        .iter()
        .map(|v| LoopScalar::from_samples(n, v))
        .collect();

    // X2 component: divide by 1 + 2 mu (never vanishes on the circle).
    let one_plus: Vec<C64> = pts
        .iter()
        .map(|lam| ONE_C + 2.0 * params.mu_at(*lam))
        .collect();
    let x2_vals: Vec<C64> = comp[1]
        .eval_circle(m)
        .iter()
        .zip(&one_plus)
        .map(|(c, d)| c / d)
        .collect();
    let x2 = LoopScalar::from_samples(n, &x2_vals);

    // X3 component: deflate numerator and denominator by the root pair.
    let eq = params.q.exp();
    let emq = (-params.q).exp();
    let num = &comp[2];
    let num_norm = num.rho_norm(1.0);
    let one_minus_vals: Vec<C64> = pts
        .iter()
        .map(|lam| ONE_C - 2.0 * params.mu_at(*lam))
        .collect();
    let x3;
    let rel_rem;
    if num_norm <= 1e-4 * c_scale.max(1e-20) {
        // The component is numerical residue (a gauged potential with its
        // first coefficient removed): divide pointwise on the circle, where
        // 1 - 2 mu does not vanish for t != 0; no divisibility to certify.
        let vals: Vec<C64> = num
            .eval_circle(pts.len())
            .iter()
            .zip(&one_minus_vals)
            .map(|(a, b)| a / b)
            .collect();
        x3 = LoopScalar::from_samples(n, &vals);
        rel_rem = 0.0;
    } else {
        let (num1, rem1) = num.divide_root(C64::new(eq, 0.0));
        let (num2, rem2) = num1.divide_root(C64::new(emq, 0.0));
        rel_rem = (rem1 + rem2) / (num_norm + 1e-300);
        if rel_rem > deflation_tol {
            return Err(Error::Deflation {
                remainder: rel_rem,
                tol: deflation_tol,
            });
        }
        let one_minus = LoopScalar::from_samples(n, &one_minus_vals);
        let (den1, _) = one_minus.divide_root(C64::new(eq, 0.0));
        let (den2, _) = den1.divide_root(C64::new(emq, 0.0));
        x3 = num2.divide(&den2, 1e-12)?;
    }

    // Reassemble P^1 = H diag-combination H^{-1} pointwise.
    let mut vals = Vec::with_capacity(m);
    for lam in &pts {
        let h = params.diagonalizer_at(*lam);
        let xb = Mat2::new(
            comp[0].eval(*lam),
            x2.eval(*lam),
            x3.eval(*lam),
            comp[3].eval(*lam),
        );
        vals.push(h * xb * h.adjugate());
    }
    Ok((LoopMat::from_samples(n, &vals), rel_rem))
}

/// Compute the Frobenius normal form of a perturbed Delaunay frame.
/// `frame_at` evaluates the (normalized) holomorphic frame on the principal
/// sector; the probe point for M extraction lies on the positive real ray.
pub fn frobenius_zap(
    params: &DelaunayParams,
    pot: &dyn Potential,
    frame_at: &dyn Fn(C64) -> Result<LoopMat>,
    cfg: &ZapConfig,
    n: usize,
) -> Result<ZapForm> {
    let c = perturbation_coefficients(params, pot, cfg, n)?;
    let c0_norm = c[0].rho_norm(1.0);

    let mut p = Vec::with_capacity(cfg.taylor_order + 1);
    p.push(LoopMat::identity(n));
    let c_scale = c.iter().map(|ck| ck.rho_norm(1.0)).fold(0.0f64, f64::max);
    let (p1, deflation_remainder) = if c0_norm <= 1e-13 {
        (LoopMat::zero(n), 0.0)
    } else {
        first_coefficient(params, &c[0], c_scale, n, cfg.deflation_tol)?
    };
    p.push(p1);

    let mut min_gap = f64::INFINITY;
    for k in 1..cfg.taylor_order {
        // L_{t,k+1}(P^{k+1}) = sum_{i+j=k} P^i C_j
        let mut rhs = LoopMat::zero(n);
        for i in 0..=k {
            let j = k - i;
            if j < c.len() && i < p.len() {
                rhs = rhs.add(&p[i].product(&c[j])?)?;
            }
        }
        let (pk1, gap) = invert_homological(params, k + 1, &rhs, n)?;
        min_gap = min_gap.min(gap);
        p.push(pk1);
    }

    // Extract M at the probe point.
    let z_star = C64::new(cfg.probe_factor * cfg.cauchy_radius, 0.0);
    let phi = frame_at(z_star)?;
    let mut zap = ZapForm {
        params: *params,
        n,
        m: LoopMat::identity(n),
        p,
        c,
        min_resonance_gap: min_gap,
        deflation_remainder,
    };
    let tail = zap.z_pow_a(z_star).product(&zap.p_at(z_star))?;
    zap.m = phi.product(&tail.inverse()?)?;
    Ok(zap)
}

/// || Phi(z) - M z^A P(z) ||_rho sampled on an arc of radius `radius` in the
/// principal sector.
pub fn zap_residual(
    zap: &ZapForm,
    frame_at: &dyn Fn(C64) -> Result<LoopMat>,
    radius: f64,
    rho: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..8 {
        let th = -1.2 + 2.4 * k as f64 / 7.0;
        let z = C64::from_polar(radius, th);
        let lhs = frame_at(z)?;
        let rhs = zap.frame_at(z)?;
        worst = worst.max(lhs.sub(&rhs)?.rho_norm(rho));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Unitary / commuting split

/// M = U K with U unitary on the circle and K = sqrt(M* M) Hermitian
/// positive pointwise. Requires M within the loop square root's domain.
pub fn loop_unitary_split(m: &LoopMat) -> Result<(LoopMat, LoopMat)> {
    let g = m.circle_adjoint().product(m)?;
    let k = g.log()?.scale(C64::new(0.5, 0.0)).exp();
    let u = m.product(&k.inverse()?)?;
    Ok((u, k))
}

/// R(theta) = U exp(i theta A) U^{-1}: the rotational symmetry loop of the
/// dressed Delaunay frame M z^A.
pub fn rotation_loop(
    u: &LoopMat,
    params: &DelaunayParams,
    theta: f64,
    n: usize,
) -> Result<LoopMat> {
    let rot = params.residue(n).scale(C64::new(0.0, theta)).exp();
    u.product(&rot)?.product(&u.inverse()?)
}

// ---------------------------------------------------------------------------
// Second-order gauge

#[derive(Clone)]
pub struct SecondOrderGauge {
    /// Coordinate-map coefficient: h(z) = z / (1 + p z).
    pub p: C64,
    /// Gauge generator: G(z) = exp(g z).
    pub g: LoopMat,
}

impl SecondOrderGauge {
    pub fn h_map(&self, w: C64) -> Result<C64> {
        let denom = ONE_C + self.p * w;
        if denom.norm() < 0.2 {
            return Err(Error::Parameter(format!(
                "coordinate map leaves its domain: |1 + p z| = {:.3e}",
                denom.norm()
            )));
        }
        Ok(w / denom)
    }

    pub fn h_prime(&self, w: C64) -> C64 {
        let denom = ONE_C + self.p * w;
        (denom * denom).inv()
    }

    pub fn gauge_at(&self, z: C64, lambda: C64) -> Mat2 {
        self.g.eval(lambda).scale(z).exp()
    }

    pub fn gauge_loop(&self, z: C64) -> LoopMat {
        self.g.scale(z).exp()
    }
}

/// The admissible gauge removing the first-order Taylor term:
/// p_t = 2 sinh q (s c2(t,0) + r c3(t,0)), g_t = p_t A_t - P^1.
pub fn second_order_gauge(zap: &ZapForm) -> Result<SecondOrderGauge> {
    let params = &zap.params;
    let (r, s, t, q) = (params.r, params.s, params.t, params.q);
    if t.abs() < 1e-14 || zap.c.is_empty() {
        return Ok(SecondOrderGauge {
            p: ZERO_C,
            g: LoopMat::zero(zap.n),
        });
    }
    // C(0) = [[t c1, t c2 / lambda], [t c3, -t c1]]: read t c2(0) from the
    // lambda^{-1} coefficient upstairs and t c3(0) from the constant downstairs.
    let tc2_0 = zap.c[0].entry(0, 1).coeff(-1);
    let tc3_0 = zap.c[0].entry(1, 0).coeff(0);
    let p_t = (tc2_0 * s + tc3_0 * r) * (2.0 * q.sinh() / t);
    let g = zap
        .params
        .residue(zap.n)
        .scale(p_t)
        .sub(&zap.p[1])?;
    Ok(SecondOrderGauge { p: p_t, g })
}

/// The potential after the second-order gauge and reparametrization:
/// h*(xi . G) with G = exp(g z); its Frobenius form has P = I + O(t z^2).
pub struct SecondOrderGauged<'a> {
    pub inner: &'a dyn Potential,
    pub gauge: SecondOrderGauge,
}

impl<'a> Potential for SecondOrderGauged<'a> {
    fn order(&self) -> usize {
        self.inner.order()
    }
    fn eval_at(&self, w: C64, lambda: C64) -> Result<Mat2> {
        let z = self.gauge.h_map(w)?;
        let xi = self.inner.eval_at(z, lambda)?;
        let g = self.gauge.g.eval(lambda);
        let e = g.scale(z).exp();
        // det G = 1 (g is trace-free), so the inverse is the adjugate;
        // G' = g G and [G, g] = 0.
        let conj = e.adjugate() * xi * e + g;
        Ok(conj.scale(self.gauge.h_prime(w)))
    }
    fn pole_distance(&self, w: C64) -> f64 {
        w.norm()
    }
}
