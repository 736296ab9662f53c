//! DPW potentials: sphere, Delaunay, perturbed Delaunay, n-noid and minoid,
//! plus gauge transformations and the per-end normalizing gauges.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{sample_count, LoopMat, LoopScalar};
use crate::mat2::{Mat2, ONE_C, ZERO_C};

// ---------------------------------------------------------------------------
// Delaunay parameters

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// r >= s: the unit circle maps to a bulge; t -> 0 gives a sphere.
    Spherical,
    /// r <= s: the unit circle maps to a neck; t -> 0 blows up to a catenoid.
    Catenoidal,
}

/// Parameters of a Delaunay residue A_{r,s} with weight 2 pi t.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DelaunayParams {
    pub q: f64,
    pub h: f64,
    pub t: f64,
    pub r: f64,
    pub s: f64,
    pub branch: Branch,
}

/// Largest weight parameter admitting a Delaunay residue: tanh(q/2) / 2.
pub fn t_max(q: f64) -> f64 {
    (q / 2.0).tanh() / 2.0
}

/// Solve r^2 + s^2 + 2 r s cosh q = 1/4 and 4 r s sinh q = t on the requested
/// continuous branch.
pub fn delaunay_rs(q: f64, t: f64, branch: Branch) -> Result<DelaunayParams> {
    if q <= 0.0 {
        return Err(Error::Parameter(format!("q must be positive, got {q}")));
    }
    let t1 = t_max(q);
    let t2 = 1.0 / (2.0 * (q / 2.0).tanh());
    if t >= t1 {
        return Err(Error::Parameter(format!(
            "t = {t} is not below T1 = {t1:.6}"
        )));
    }
    let h = 1.0 / q.tanh();
    let disc = (t1 - t).sqrt() * (t2 - t).sqrt();
    let (r, s);
    match branch {
        Branch::Spherical => {
            r = ((1.0 - 2.0 * h * t + 2.0 * disc) / 8.0).sqrt();
            s = t / (4.0 * r * q.sinh());
        }
        Branch::Catenoidal => {
            if t == 0.0 {
                // continuous limit of the neck parametrisation
                let p = DelaunayParams {
                    q,
                    h,
                    t,
                    r: 0.0,
                    s: 0.5,
                    branch,
                };
                p.assert_invariants()?;
                return Ok(p);
            }
            // (1 - 2Ht)^2 - 4 (T1-t)(T2-t) = 4 t^2 (H^2 - 1) exactly, so the
            // small root is computed by its conjugate form (no cancellation).
            r = t * (h * h - 1.0).sqrt() / (2.0 * (1.0 - 2.0 * h * t + 2.0 * disc)).sqrt();
            s = t / (4.0 * r * q.sinh());
        }
    }
    let p = DelaunayParams { q, h, t, r, s, branch };
    p.assert_invariants()?;
    Ok(p)
}

/// Build Delaunay parameters from a prescribed product r s (the end-gauge
/// route: r s = t a_i for n-noids, r s = t alpha_i / (4 sinh q) for minoids).
pub fn delaunay_from_product(q: f64, rs: f64, branch: Branch) -> Result<DelaunayParams> {
    let h = 1.0 / q.tanh();
    let sum_sq = 0.25 + 2.0 * rs * (1.0 - q.cosh());
    let diff_sq = 0.25 - 2.0 * rs * (1.0 + q.cosh());
    if sum_sq <= 0.0 || diff_sq < 0.0 {
        return Err(Error::Parameter(format!(
            "no Delaunay residue with r s = {rs}"
        )));
    }
    let sum = sum_sq.sqrt();
    let diff = diff_sq.sqrt();
    let (r, s) = match branch {
        Branch::Spherical => ((sum + diff) / 2.0, (sum - diff) / 2.0),
        Branch::Catenoidal => ((sum - diff) / 2.0, (sum + diff) / 2.0),
    };
    let p = DelaunayParams {
        q,
        h,
        t: 4.0 * rs * q.sinh(),
        r,
        s,
        branch,
    };
    p.assert_invariants()?;
    Ok(p)
}

impl DelaunayParams {
    pub fn assert_invariants(&self) -> Result<()> {
        let circle = self.r * self.r + self.s * self.s + 2.0 * self.r * self.s * self.q.cosh();
        if (circle - 0.25).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "monodromy condition residual {:.3e}",
                circle - 0.25
            )));
        }
        if (4.0 * self.r * self.s * self.q.sinh() - self.t).abs() > 1e-12 {
            return Err(Error::Parameter("weight condition violated".into()));
        }
        match self.branch {
            Branch::Spherical if self.r < self.s => {
                return Err(Error::Parameter("spherical branch needs r >= s".into()))
            }
            Branch::Catenoidal if self.r > self.s => {
                return Err(Error::Parameter("catenoidal branch needs r <= s".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// The residue loop A_{r,s}(lambda) = [[0, r/lambda + s], [r lambda + s, 0]].
    pub fn residue(&self, n: usize) -> LoopMat {
        LoopMat::from_terms(
            n,
            &[
                (0, Mat2::from_real(0.0, self.s, self.s, 0.0)),
                (-1, Mat2::from_real(0.0, self.r, 0.0, 0.0)),
                (1, Mat2::from_real(0.0, 0.0, self.r, 0.0)),
            ],
        )
    }

    pub fn residue_at(&self, lambda: C64) -> Mat2 {
        Mat2::new(
            ZERO_C,
            self.r * lambda.inv() + self.s,
            self.r * lambda + self.s,
            ZERO_C,
        )
    }

    /// Positive-real-part eigenvalue function mu(lambda) with mu^2 = -det A.
    pub fn mu_at(&self, lambda: C64) -> C64 {
        let m2 = (self.r * lambda.inv() + self.s) * (self.r * lambda + self.s);
        let mu = m2.sqrt();
        if mu.re < 0.0 {
            -mu
        } else {
            mu
        }
    }

    /// Unitary diagonalizer H with A = H diag(mu, -mu) H^{-1}.
    pub fn diagonalizer_at(&self, lambda: C64) -> Mat2 {
        let mu = self.mu_at(lambda);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        Mat2::new(
            C64::new(inv_sqrt2, 0.0),
            -(self.r * lambda.inv() + self.s) / mu * inv_sqrt2,
            (self.r * lambda + self.s) / mu * inv_sqrt2,
            C64::new(inv_sqrt2, 0.0),
        )
    }
}

// ---------------------------------------------------------------------------
// Potential abstraction

/// A z-only potential evaluator with all lambda-dependent data precomputed;
/// the fast path of pointwise frame integration.
pub struct FrozenPotential<'a> {
    eval: Box<dyn Fn(C64) -> Result<Mat2> + Sync + 'a>,
}

impl<'a> FrozenPotential<'a> {
    pub fn new(eval: impl Fn(C64) -> Result<Mat2> + Sync + 'a) -> Self {
        Self {
            eval: Box::new(eval),
        }
    }

    pub fn eval(&self, z: C64) -> Result<Mat2> {
        (self.eval)(z)
    }
}

/// A holomorphic DPW potential: the coefficient of dz, as a loop or pointwise
/// in lambda.
pub trait Potential: Sync {
    fn order(&self) -> usize;

    /// Pointwise evaluation in the spectral parameter.
    fn eval_at(&self, z: C64, lambda: C64) -> Result<Mat2>;

    /// Distance from z to the nearest pole (infinity when there is none).
    fn pole_distance(&self, z: C64) -> f64 {
        let _ = z;
        f64::INFINITY
    }

    /// Freeze the spectral parameter, precomputing what can be precomputed.
    fn freeze(&self, lambda: C64) -> FrozenPotential<'_> {
        FrozenPotential::new(move |z| self.eval_at(z, lambda))
    }

    /// Loop-valued evaluation by circle sampling.
    fn eval(&self, z: C64) -> Result<LoopMat> {
        let n = self.order();
        let m = sample_count(n);
        let mut vals = Vec::with_capacity(m);
        for j in 0..m {
            let lam = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64);
            vals.push(self.eval_at(z, lam)?);
        }
        Ok(LoopMat::from_samples(n, &vals))
    }
}

/// Guard radius below which potential evaluation near a pole is refused.
pub const POLE_GUARD: f64 = 1e-3;

/// xi_S = [[0, 1/lambda], [0, 0]] dz.
#[derive(Clone, Debug)]
pub struct SpherePotential {
    pub n: usize,
}

impl Potential for SpherePotential {
    fn order(&self) -> usize {
        self.n
    }
    fn eval_at(&self, _z: C64, lambda: C64) -> Result<Mat2> {
        Ok(Mat2::new(ZERO_C, lambda.inv(), ZERO_C, ZERO_C))
    }
    fn eval(&self, _z: C64) -> Result<LoopMat> {
        Ok(LoopMat::from_terms(
            self.n,
            &[(-1, Mat2::from_real(0.0, 1.0, 0.0, 0.0))],
        ))
    }
}

/// xi_{r,s} = A_{r,s} dz / z.
#[derive(Clone, Debug)]
pub struct DelaunayPotential {
    pub params: DelaunayParams,
    pub n: usize,
}

impl Potential for DelaunayPotential {
    fn order(&self) -> usize {
        self.n
    }
    fn eval_at(&self, z: C64, lambda: C64) -> Result<Mat2> {
        if z.norm() < POLE_GUARD {
            return Err(Error::NearPole(z.norm()));
        }
        Ok(self.params.residue_at(lambda).scale(z.inv()))
    }
    fn eval(&self, z: C64) -> Result<LoopMat> {
        if z.norm() < POLE_GUARD {
            return Err(Error::NearPole(z.norm()));
        }
        Ok(self.params.residue(self.n).scale(z.inv()))
    }
    fn pole_distance(&self, z: C64) -> f64 {
        z.norm()
    }
}

/// Perturbed Delaunay potential A_t / z + C(z) with C given by a Taylor
/// polynomial in z (loop-valued coefficients).
#[derive(Clone, Debug)]
pub struct PerturbedDelaunayPotential {
    pub params: DelaunayParams,
    pub c: Vec<LoopMat>,
    pub n: usize,
}

impl Potential for PerturbedDelaunayPotential {
    fn order(&self) -> usize {
        self.n
    }
    fn eval_at(&self, z: C64, lambda: C64) -> Result<Mat2> {
        if z.norm() < POLE_GUARD {
            return Err(Error::NearPole(z.norm()));
        }
        let mut acc = Mat2::zero();
        for ck in self.c.iter().rev() {
            acc = acc.scale(z) + ck.eval(lambda);
        }
        Ok(self.params.residue_at(lambda).scale(z.inv()) + acc)
    }
    fn pole_distance(&self, z: C64) -> f64 {
        z.norm()
    }
}

// ---------------------------------------------------------------------------
// n-noid configuration and parameter vectors

/// Inverse stereographic projection from the north pole onto the unit sphere
/// of T_{I2} H^3.
pub fn v_s(z: C64) -> [f64; 3] {
    let d = 1.0 + z.norm_sqr();
    [2.0 * z.re / d, 2.0 * z.im / d, (z.norm_sqr() - 1.0) / d]
}

/// Inverse of v_s; undefined at the poles +/- sigma3.
pub fn v_s_inv(u: [f64; 3]) -> Result<C64> {
    if (1.0 - u[2]).abs() < 1e-9 || (1.0 + u[2]).abs() < 1e-9 {
        return Err(Error::Parameter(
            "unit vector at the north/south pole has no finite stereographic image".into(),
        ));
    }
    Ok(C64::new(u[0], u[1]) / (1.0 - u[2]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NnoidConfig {
    pub q: f64,
    /// Unit direction of each end in T_{I2} H^3.
    pub directions: Vec<[f64; 3]>,
    /// Nonzero end weights tau_i; must balance.
    pub weights: Vec<f64>,
}

impl NnoidConfig {
    /// The symmetric n-noid: coplanar unit directions at equal angles, unit
    /// weights.
    pub fn symmetric(n: usize, q: f64) -> Self {
        let directions = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect();
        Self {
            q,
            directions,
            weights: vec![1.0; n],
        }
    }

    pub fn n_ends(&self) -> usize {
        self.directions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_ends();
        if n < 3 {
            return Err(Error::Parameter(format!("need at least 3 ends, got {n}")));
        }
        if self.weights.len() != n {
            return Err(Error::Parameter("weights/directions length mismatch".into()));
        }
        if self.weights.iter().any(|t| *t == 0.0) {
            return Err(Error::Parameter("weights must be nonzero".into()));
        }
        for u in &self.directions {
            let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter("directions must be unit vectors".into()));
            }
        }
        let mut bal = [0.0; 3];
        for (u, tau) in self.directions.iter().zip(&self.weights) {
            for k in 0..3 {
                bal[k] += tau * u[k];
            }
        }
        let defect = (bal[0] * bal[0] + bal[1] * bal[1] + bal[2] * bal[2]).sqrt();
        if defect > 1e-12 {
            return Err(Error::Unbalanced(defect));
        }
        // v_s^{-1} must be finite and nonzero for every direction.
        for u in &self.directions {
            v_s_inv(*u)?;
        }
        Ok(())
    }

    /// The embedded-angle predicate |sin(theta_ij / 2)| > sqrt(H^2-1) / (2H)
    /// per pair of ends (equivalently 1 / (2 cosh q)).
    pub fn angle_condition(&self) -> Vec<((usize, usize), bool)> {
        let rhs = 1.0 / (2.0 * self.q.cosh());
        let mut out = Vec::new();
        for i in 0..self.n_ends() {
            for j in (i + 1)..self.n_ends() {
                let ui = self.directions[i];
                let uj = self.directions[j];
                let dot = ui[0] * uj[0] + ui[1] * uj[1] + ui[2] * uj[2];
                let theta = dot.clamp(-1.0, 1.0).acos();
                out.push(((i, j), (theta / 2.0).sin().abs() > rhs));
            }
        }
        out
    }
}

/// Parameter vector of an n-noid (or minoid) potential: loop-valued a_i, b_i,
/// p_i, all plus-loops.
#[derive(Clone, Debug)]
pub struct ParamVector {
    pub a: Vec<LoopScalar>,
    pub b: Vec<LoopScalar>,
    pub p: Vec<LoopScalar>,
}

impl ParamVector {
    pub fn n_ends(&self) -> usize {
        self.a.len()
    }
}

/// Central value of the n-noid parameter vector: a_i = tau_i, p_i = pi_i,
/// b_i = -2 a_i conj(pi_i) / (1 + |pi_i|^2).
pub fn nnoid_central_value(cfg: &NnoidConfig, order: usize) -> Result<ParamVector> {
    cfg.validate()?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut p = Vec::new();
    for (u, tau) in cfg.directions.iter().zip(&cfg.weights) {
        let pi = v_s_inv(*u)?;
        a.push(LoopScalar::constant(order, C64::new(*tau, 0.0)));
        b.push(LoopScalar::constant(
            order,
            -pi.conj() * (2.0 * tau) / (1.0 + pi.norm_sqr()),
        ));
        p.push(LoopScalar::constant(order, pi));
    }
    Ok(ParamVector { a, b, p })
}

/// The three Laurent coefficients of omega_x at z = infinity whose vanishing
/// makes the potential regular there: (sum b_i, sum (a_i + b_i p_i),
/// sum (2 a_i p_i + b_i p_i^2)), evaluated pointwise in lambda.
pub fn regularity_residual_at(x: &ParamVector, lambda: C64) -> [C64; 3] {
    let mut r = [ZERO_C; 3];
    for i in 0..x.n_ends() {
        let a = x.a[i].eval(lambda);
        let b = x.b[i].eval(lambda);
        let p = x.p[i].eval(lambda);
        r[0] += b;
        r[1] += a + b * p;
        r[2] += 2.0 * a * p + b * p * p;
    }
    r
}

/// beta_t(lambda) = t (lambda - e^q)(lambda - e^{-q}).
pub fn beta_nnoid(t: f64, q: f64, lambda: C64) -> C64 {
    (lambda - q.exp()) * (lambda - (-q).exp()) * t
}

/// omega_x(z, lambda) = sum a_i/(z - p_i)^2 + b_i/(z - p_i).
fn omega_at(x: &ParamVector, z: C64, lambda: C64) -> C64 {
    let mut acc = ZERO_C;
    for i in 0..x.n_ends() {
        let d = z - x.p[i].eval(lambda);
        let di = d.inv();
        acc += x.a[i].eval(lambda) * di * di + x.b[i].eval(lambda) * di;
    }
    acc
}

/// The n-noid potential [[0, 1/lambda], [beta_t omega_x, 0]] dz.
#[derive(Clone, Debug)]
pub struct NnoidPotential {
    pub q: f64,
    pub t: f64,
    pub x: ParamVector,
    pub n: usize,
    pub guard: f64,
}

impl NnoidPotential {
    pub fn new(q: f64, t: f64, x: ParamVector, n: usize) -> Self {
        Self {
            q,
            t,
            x,
            n,
            guard: POLE_GUARD,
        }
    }

    /// Pole positions at lambda = 0 (the guard reference per the level-zero
    /// normalization of the poles).
    pub fn poles(&self) -> Vec<C64> {
        self.x.p.iter().map(|p| p.eval(ZERO_C)).collect()
    }
}

impl Potential for NnoidPotential {
    fn order(&self) -> usize {
        self.n
    }
    fn eval_at(&self, z: C64, lambda: C64) -> Result<Mat2> {
        self.freeze(lambda).eval(z)
    }
    fn freeze(&self, lambda: C64) -> FrozenPotential<'_> {
        let n_ends = self.x.n_ends();
        let mut coeffs = Vec::with_capacity(n_ends);
        for i in 0..n_ends {
            coeffs.push((
                self.x.a[i].eval(lambda),
                self.x.b[i].eval(lambda),
                self.x.p[i].eval(lambda),
            ));
        }
        let beta = beta_nnoid(self.t, self.q, lambda);
        let upper = lambda.inv();
        let guard = self.guard;
        // guard the actual poles of this spectral sample; the lambda = 0
        // positions are only the path-planning reference
        FrozenPotential::new(move |z| {
            let mut min_d = f64::INFINITY;
            for (_, _, p) in &coeffs {
                min_d = min_d.min((z - p).norm());
            }
            if min_d < guard {
                return Err(Error::NearPole(min_d));
            }
            let mut w = ZERO_C;
            for (a, b, p) in &coeffs {
                let di = (z - p).inv();
                w += (*a * di + b) * di;
            }
            Ok(Mat2::new(ZERO_C, upper, beta * w, ZERO_C))
        })
    }
    fn pole_distance(&self, z: C64) -> f64 {
        self.poles()
            .iter()
            .map(|p| (z - p).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// The minoid potential [[0, beta omega / lambda], [dg, 0]] dz where
/// g = A_x / B_x, omega = B_x^2 / prod (z - p_i)^2 and
/// beta(lambda) = t (lambda - e^q)(lambda - e^{-q}) / (4 sinh q).
#[derive(Clone, Debug)]
pub struct MinoidPotential {
    pub q: f64,
    pub t: f64,
    /// Coefficients of A_x(z) = sum a_j z^{j-1} and B_x alike.
    pub x: ParamVector,
    pub n: usize,
    pub guard: f64,
}

impl MinoidPotential {
    pub fn new(q: f64, t: f64, x: ParamVector, n: usize) -> Self {
        Self {
            q,
            t,
            x,
            n,
            guard: POLE_GUARD,
        }
    }

    pub fn poles(&self) -> Vec<C64> {
        self.x.p.iter().map(|p| p.eval(ZERO_C)).collect()
    }

    fn polys_at(&self, z: C64, lambda: C64) -> (C64, C64, C64, C64) {
        // A, B and their z-derivatives by Horner.
        let mut a = ZERO_C;
        let mut da = ZERO_C;
        for c in self.x.a.iter().rev().map(|c| c.eval(lambda)) {
            da = da * z + a;
            a = a * z + c;
        }
        let mut b = ZERO_C;
        let mut db = ZERO_C;
        for c in self.x.b.iter().rev().map(|c| c.eval(lambda)) {
            db = db * z + b;
            b = b * z + c;
        }
        (a, da, b, db)
    }

    pub fn beta(&self, lambda: C64) -> C64 {
        beta_nnoid(self.t, self.q, lambda) / (4.0 * self.q.sinh())
    }

    /// g_x and its z-derivative.
    pub fn gauss_map_at(&self, z: C64, lambda: C64) -> Result<(C64, C64)> {
        let (a, da, b, db) = self.polys_at(z, lambda);
        if b.norm() < 1e-12 {
            return Err(Error::NearPole(b.norm()));
        }
        Ok((a / b, (da * b - a * db) / (b * b)))
    }

    /// omega_x(z, lambda).
    pub fn omega_at(&self, z: C64, lambda: C64) -> Result<C64> {
        let (_, _, b, _) = self.polys_at(z, lambda);
        let mut denom = ONE_C;
        for p in &self.x.p {
            let d = z - p.eval(lambda);
            denom *= d * d;
        }
        if denom.norm() < 1e-300 {
            return Err(Error::NearPole(0.0));
        }
        Ok(b * b / denom)
    }
}

impl Potential for MinoidPotential {
    fn order(&self) -> usize {
        self.n
    }
    fn eval_at(&self, z: C64, lambda: C64) -> Result<Mat2> {
        self.freeze(lambda).eval(z)
    }
    fn freeze(&self, lambda: C64) -> FrozenPotential<'_> {
        let a: Vec<C64> = self.x.a.iter().map(|c| c.eval(lambda)).collect();
        let b: Vec<C64> = self.x.b.iter().map(|c| c.eval(lambda)).collect();
        let p: Vec<C64> = self.x.p.iter().map(|c| c.eval(lambda)).collect();
        let upper_scale = lambda.inv() * self.beta(lambda);
        let guard = self.guard;
        // guard the actual poles of this spectral sample
        FrozenPotential::new(move |z| {
            let mut min_d = f64::INFINITY;
            for q in &p {
                min_d = min_d.min((z - q).norm());
            }
            if min_d < guard {
                return Err(Error::NearPole(min_d));
            }
            let horner = |c: &[C64]| {
                let mut v = ZERO_C;
                let mut dv = ZERO_C;
                for ck in c.iter().rev() {
                    dv = dv * z + v;
                    v = v * z + ck;
                }
                (v, dv)
            };
            let (av, dav) = horner(&a);
            let (bv, dbv) = horner(&b);
            if bv.norm() < 1e-12 {
                return Err(Error::NearPole(bv.norm()));
            }
            let dg = (dav * bv - av * dbv) / (bv * bv);
            let mut denom = ONE_C;
            for q in &p {
                let d = z - q;
                denom *= d * d;
            }
            Ok(Mat2::new(
                ZERO_C,
                upper_scale * bv * bv / denom,
                dg,
                ZERO_C,
            ))
        })
    }
    fn pole_distance(&self, z: C64) -> f64 {
        self.poles()
            .iter()
            .map(|p| (z - p).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Gauging

/// xi . G = G^{-1} xi G + G^{-1} dG on evaluated loops.
pub fn gauge_potential(xi: &LoopMat, g: &LoopMat, dg: &LoopMat) -> Result<LoopMat> {
    let gi = g.inverse()?;
    let conj = gi.product(&xi.product(g)?)?;
    conj.add(&gi.product(dg)?)
}

// ---------------------------------------------------------------------------
// End gauges: the normalized perturbed-Delaunay potential around one pole

/// Normalized potential data around one n-noid end: in the end coordinate w,
/// the potential is A_t / w + C(w) with A_t the Delaunay residue below, and
/// the end frame is obtained from the global frame by
///   F_hat(w) = H Q_i^{-1} Phi(h(w) + p_i(lambda)) G_t(h(w)) G(w).
#[derive(Clone)]
pub struct NnoidEnd {
    pub index: usize,
    pub params: DelaunayParams,
    /// pi_i = p_i(0)
    pub pi: C64,
    pub q: f64,
    pub t: f64,
    nnoid: NnoidPotential,
}

impl NnoidEnd {
    /// h(w) = (1 + |pi|^2) w / (1 - conj(pi) w).
    pub fn h_map(&self, w: C64) -> C64 {
        (1.0 + self.pi.norm_sqr()) * w / (ONE_C - self.pi.conj() * w)
    }

    pub fn h_prime(&self, w: C64) -> C64 {
        let d = ONE_C - self.pi.conj() * w;
        (1.0 + self.pi.norm_sqr()) / (d * d)
    }

    /// The square-root end gauge G_t evaluated pointwise. Principal branches;
    /// callers keep paths inside a fixed sector.
    pub fn sqrt_gauge_at(&self, zeta: C64, lambda: C64) -> Mat2 {
        let rs = self.params.r + self.params.s * lambda;
        let sq_rs = rs.sqrt();
        let sq_z = zeta.sqrt();
        Mat2::new(
            sq_z / sq_rs,
            ZERO_C,
            -lambda / (2.0 * sq_z * sq_rs),
            sq_rs / sq_z,
        )
    }

    /// The second normalizing gauge G(w, lambda).
    pub fn second_gauge_at(&self, w: C64, lambda: C64) -> Mat2 {
        let d = ONE_C - self.pi.conj() * w;
        Mat2::new(ONE_C, ZERO_C, -lambda * self.pi.conj() * w, d).scale(d.sqrt().inv())
    }

    /// The unitary dressing D = H Q_i^{-1} applied on the left of end frames.
    pub fn dressing_at(&self, lambda: C64) -> Mat2 {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let h0 = Mat2::new(
            C64::new(inv_sqrt2, 0.0),
            -lambda.inv() * inv_sqrt2,
            lambda * inv_sqrt2,
            C64::new(inv_sqrt2, 0.0),
        );
        let scale = 1.0 / (1.0 + self.pi.norm_sqr()).sqrt();
        let q_i = Mat2::new(
            C64::new(1.0, 0.0),
            lambda.inv() * self.pi,
            -lambda * self.pi.conj(),
            C64::new(1.0, 0.0),
        )
        .scale(C64::new(scale, 0.0));
        h0 * q_i.adjugate() // Q_i in SU(2)-form: inverse = adjugate
    }

    /// The intermediate potential xi-tilde(zeta) = A_t / zeta + C(zeta)
    /// around the pole, before the second normalization:
    /// lower-left perturbation c(zeta) = beta_t/(r + s lambda) *
    /// (omega(zeta + p_i) zeta^2 - t a_i) / zeta ... assembled directly.
    pub fn tilde_at(&self, zeta: C64, lambda: C64) -> Result<Mat2> {
        let (r, s) = (self.params.r, self.params.s);
        let rs_lam = r + s * lambda;
        let beta = beta_nnoid(self.t, self.q, lambda);
        let z_glob = zeta + self.nnoid.x.p[self.index].eval(lambda);
        let omega = omega_at(&self.nnoid.x, z_glob, lambda);
        let lower = (beta * omega * zeta * zeta + lambda * 0.25) / rs_lam;
        Ok(Mat2::new(
            ZERO_C,
            r * lambda.inv() + s,
            lower,
            ZERO_C,
        )
        .scale(zeta.inv()))
    }
}

impl Potential for NnoidEnd {
    fn order(&self) -> usize {
        self.nnoid.n
    }

    /// The fully normalized end potential xi-hat(w) = (h* xi-tilde) . G.
    fn eval_at(&self, w: C64, lambda: C64) -> Result<Mat2> {
        if w.norm() < 1e-12 {
            return Err(Error::NearPole(w.norm()));
        }
        let zeta = self.h_map(w);
        let pulled = self.tilde_at(zeta, lambda)?.scale(self.h_prime(w));
        // G = phi * G-hat with scalar phi; conjugation drops phi.
        let d = ONE_C - self.pi.conj() * w;
        let ghat = Mat2::new(ONE_C, ZERO_C, -lambda * self.pi.conj() * w, d);
        let ghat_inv = Mat2::new(d, ZERO_C, lambda * self.pi.conj() * w, ONE_C).scale(d.inv());
        let connection = Mat2::new(
            self.pi.conj() * 0.5,
            ZERO_C,
            -lambda * self.pi.conj(),
            -self.pi.conj() * 0.5,
        )
        .scale(d.inv());
        Ok(ghat_inv * pulled * ghat + connection)
    }

    fn pole_distance(&self, w: C64) -> f64 {
        w.norm()
    }
}

/// Build the normalized end data for a solved n-noid potential.
pub fn nnoid_end(pot: &NnoidPotential, index: usize) -> Result<NnoidEnd> {
    if index >= pot.x.n_ends() {
        return Err(Error::Parameter(format!("end index {index} out of range")));
    }
    let a0 = pot.x.a[index].eval(ZERO_C);
    if a0.im.abs() > 1e-6 {
        return Err(Error::Parameter(format!(
            "end coefficient a_{index}(0) = {a0:.6e} is not real"
        )));
    }
    let rs = pot.t * a0.re;
    let params = delaunay_from_product(pot.q, rs, Branch::Spherical)?;
    let pi = pot.x.p[index].eval(ZERO_C);
    Ok(NnoidEnd {
        index,
        params,
        pi,
        q: pot.q,
        t: pot.t,
        nnoid: pot.clone(),
    })
}

/// Minoid end data: the Delaunay residue parameters extracted from the
/// double-pole coefficient of omega in the Gauss-map coordinate.
#[derive(Clone, Debug)]
pub struct MinoidEnd {
    pub index: usize,
    pub params: DelaunayParams,
    /// alpha_i(0): residue coefficient at lambda = 0.
    pub alpha: C64,
}

/// alpha_{i}(lambda) = (A' B - A B')(p_i) / prod_{j != i} (p_i - p_j)^2:
/// the double-pole coefficient of omega in the coordinate zeta = g(z) - g(p_i).
pub fn minoid_alpha(pot: &MinoidPotential, index: usize, lambda: C64) -> Result<C64> {
    let p_i = pot.x.p[index].eval(lambda);
    let (_, dg) = pot.gauss_map_at(p_i, lambda)?;
    let (_, _, b, _) = pot.polys_at(p_i, lambda);
    let mut denom = ONE_C;
    for (j, p) in pot.x.p.iter().enumerate() {
        if j != index {
            let d = p_i - p.eval(lambda);
            denom *= d * d;
        }
    }
    // omega's double-pole coefficient in z is B(p_i)^2 / prod, transformed by
    // g: alpha = A_z * g'(p_i) with A_z that coefficient.
    Ok(b * b / denom * dg)
}

pub fn minoid_end(pot: &MinoidPotential, index: usize) -> Result<MinoidEnd> {
    if index >= pot.x.p.len() {
        return Err(Error::Parameter(format!("end index {index} out of range")));
    }
    let alpha = minoid_alpha(pot, index, ZERO_C)?;
    // the solver's normalization leaves a small gauge tilt in the phase;
    // the residue data lives in the real part
    if alpha.im.abs() > 5e-3 * (1.0 + alpha.norm()) {
        return Err(Error::Parameter(format!(
            "alpha_{index} = {alpha:.6e} is not real"
        )));
    }
    let rs = pot.t * alpha.re / (4.0 * pot.q.sinh());
    let params = delaunay_from_product(pot.q, rs, Branch::Catenoidal)?;
    Ok(MinoidEnd {
        index,
        params,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn delaunay_rs_limits() {
        let q = 0.5;
        let sph = delaunay_rs(q, 0.0, Branch::Spherical).unwrap();
        assert!((sph.r - 0.5).abs() < 1e-12 && sph.s.abs() < 1e-12);
        let cat = delaunay_rs(q, 0.0, Branch::Catenoidal).unwrap();
        assert!(cat.r.abs() < 1e-12 && (cat.s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn delaunay_rs_residuals() {
        let q = 0.5;
        for branch in [Branch::Spherical, Branch::Catenoidal] {
            for t in [-0.05, -0.02, 0.01, 0.02, 0.05, 0.1] {
                let p = delaunay_rs(q, t, branch).unwrap();
                p.assert_invariants().unwrap();
            }
        }
        assert!(delaunay_rs(q, t_max(q) + 1e-3, Branch::Spherical).is_err());
    }

    #[test]
    fn delaunay_rs_branch_continuity() {
        // r, s continuous through t = 0 on both branches.
        let q = 0.5;
        for branch in [Branch::Spherical, Branch::Catenoidal] {
            let m = delaunay_rs(q, -1e-9, branch).unwrap();
            let z = delaunay_rs(q, 0.0, branch).unwrap();
            let p = delaunay_rs(q, 1e-9, branch).unwrap();
            assert!((m.r - z.r).abs() < 1e-6 && (p.r - z.r).abs() < 1e-6);
            assert!((m.s - z.s).abs() < 1e-6 && (p.s - z.s).abs() < 1e-6);
        }
    }

    #[test]
    fn sweep_invariants_both_branches() {
        let q = 0.5;
        let t1 = t_max(q);
        for branch in [Branch::Spherical, Branch::Catenoidal] {
            for k in 0..100 {
                let t = -0.9 * t1 + 1.8 * t1 * (k as f64) / 99.0;
                let p = delaunay_rs(q, t, branch).unwrap();
                p.assert_invariants().unwrap();
            }
        }
    }

    #[test]
    fn potential_shapes() {
        let sphere = SpherePotential { n: 6 };
        let v = sphere.eval_at(c(0.3, 0.2), c(0.0, 1.0)).unwrap();
        assert!((v.b - c(0.0, 1.0).inv()).norm() < 1e-15);
        assert!(v.a.norm() + v.c.norm() + v.d.norm() < 1e-15);

        let params = delaunay_rs(0.5, 0.02, Branch::Spherical).unwrap();
        let del = DelaunayPotential { params, n: 6 };
        let xi = del.eval(ONE_C).unwrap();
        assert!(xi.dist(&params.residue(6)) < 1e-14);
        assert!(del.eval(c(1e-5, 0.0)).is_err());
    }

    #[test]
    fn potentials_are_trace_free() {
        let cfg = NnoidConfig::symmetric(3, 0.5);
        let x = nnoid_central_value(&cfg, 8).unwrap();
        let pot = NnoidPotential::new(0.5, 0.02, x, 8);
        for z in [c(0.2, 0.1), c(-0.4, 0.6), c(0.1, -1.4)] {
            let xi = pot.eval(z).unwrap();
            let tr = xi.entry(0, 0).add(&xi.entry(1, 1)).unwrap();
            assert!(tr.rho_norm(1.0) < 1e-14);
        }
    }

    #[test]
    fn nnoid_lower_left_vanishes_at_exp_q() {
        // beta_t has roots at e^{+-q}: the potential is upper triangular there.
        let q = 0.5;
        let cfg = NnoidConfig::symmetric(3, q);
        let x = nnoid_central_value(&cfg, 8).unwrap();
        let pot = NnoidPotential::new(q, 0.02, x, 8);
        for lam in [c(q.exp(), 0.0), c((-q).exp(), 0.0)] {
            let v = pot.eval_at(c(0.3, 0.1), lam).unwrap();
            assert!(v.c.norm() < 1e-14);
        }
    }

    #[test]
    fn central_value_balances() {
        let cfg = NnoidConfig::symmetric(3, 0.5);
        let x = nnoid_central_value(&cfg, 4).unwrap();
        // sum a_i v_s(p_i) = sum tau_i u_i = 0
        let mut acc = [0.0; 3];
        for i in 0..3 {
            let a = x.a[i].eval(ZERO_C).re;
            let u = v_s(x.p[i].eval(ZERO_C));
            for k in 0..3 {
                acc[k] += a * u[k];
            }
        }
        assert!(acc.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12);
        // symmetric 3-noid: sum b_i = 0 by symmetry
        let r = regularity_residual_at(&x, ZERO_C);
        assert!(r[0].norm() < 1e-12);
        assert!(r[1].norm() < 1e-12);
        assert!(r[2].norm() < 1e-12);
    }

    #[test]
    fn stereographic_roundtrip() {
        for z in [c(1.0, 0.0), c(0.3, -0.8), c(-2.0, 1.5)] {
            let u = v_s(z);
            let back = v_s_inv(u).unwrap();
            assert!((back - z).norm() < 1e-12);
            let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert!(v_s_inv([0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn single_end_cannot_be_regular() {
        // With one end, R1 = b1 = 0 forces R2 = a1 != 0.
        let x = ParamVector {
            a: vec![LoopScalar::constant(4, ONE_C)],
            b: vec![LoopScalar::zero(4)],
            p: vec![LoopScalar::constant(4, c(1.0, 0.0))],
        };
        let r = regularity_residual_at(&x, ZERO_C);
        assert!(r[0].norm() < 1e-15);
        assert!(r[1].norm() > 0.5);
    }

    #[test]
    fn regularity_linear_in_b() {
        let cfg = NnoidConfig::symmetric(3, 0.5);
        let mut x = nnoid_central_value(&cfg, 4).unwrap();
        let before = regularity_residual_at(&x, ZERO_C);
        let delta = c(0.017, -0.003);
        let mut b0 = x.b[0].clone();
        b0.set(0, b0.eval(ZERO_C) + delta);
        x.b[0] = b0;
        let after = regularity_residual_at(&x, ZERO_C);
        assert!((after[0] - before[0] - delta).norm() < 1e-14);
    }

    #[test]
    fn unbalanced_config_rejected() {
        let cfg = NnoidConfig {
            q: 0.5,
            directions: vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            weights: vec![1.0, 1.0, 1.0],
        };
        assert!(matches!(cfg.validate(), Err(Error::Unbalanced(_))));
    }

    #[test]
    fn angle_condition_symmetric_trinoid() {
        let cfg = NnoidConfig::symmetric(3, 0.5);
        // coplanar 120 degrees: sin(60deg) = 0.866 > 1/(2 cosh 0.5) = 0.443
        assert!(cfg.angle_condition().iter().all(|(_, ok)| *ok));
    }

    #[test]
    fn gauge_identity_and_right_action() {
        let n = 8;
        let sphere = SpherePotential { n };
        let z = c(0.4, 0.2);
        let xi = sphere.eval(z).unwrap();
        let id = LoopMat::identity(n);
        let zero = LoopMat::zero(n);
        let gauged = gauge_potential(&xi, &id, &zero).unwrap();
        assert!(gauged.dist(&xi) < 1e-13);

        // the gauge regularizing the spherical potential at infinity
        let g = LoopMat::from_terms(
            n,
            &[
                (0, Mat2::new(z, ZERO_C, ZERO_C, z.inv())),
                (1, Mat2::from_real(0.0, 0.0, -1.0, 0.0)),
            ],
        );
        let dg = LoopMat::from_terms(
            n,
            &[(0, Mat2::new(ONE_C, ZERO_C, ZERO_C, -z.inv() * z.inv()))],
        );
        let gauged = gauge_potential(&xi, &g, &dg).unwrap();
        let want = LoopMat::from_terms(
            n,
            &[(-1, Mat2::new(ZERO_C, (z * z).inv(), ZERO_C, ZERO_C))],
        );
        assert!(
            gauged.dist(&want) < 1e-12,
            "distance {:.3e}",
            gauged.dist(&want)
        );
    }

    #[test]
    fn gauge_composition_is_right_action() {
        let n = 10;
        let params = delaunay_rs(0.5, 0.03, Branch::Spherical).unwrap();
        let del = DelaunayPotential { params, n };
        let z = c(1.3, 0.4);
        let xi = del.eval(z).unwrap();
        // Two analytic gauges with explicit derivatives:
        // G1 = [[1, c1 z lambda], [0, 1]], G2 = [[1, 0], [c2 z lambda, 1]]
        let c1 = c(0.3, -0.1);
        let c2 = c(-0.2, 0.25);
        let g1 = LoopMat::from_terms(
            n,
            &[(0, Mat2::identity()), (1, Mat2::new(ZERO_C, c1 * z, ZERO_C, ZERO_C))],
        );
        let dg1 = LoopMat::from_terms(n, &[(1, Mat2::new(ZERO_C, c1, ZERO_C, ZERO_C))]);
        let g2 = LoopMat::from_terms(
            n,
            &[(0, Mat2::identity()), (1, Mat2::new(ZERO_C, ZERO_C, c2 * z, ZERO_C))],
        );
        let dg2 = LoopMat::from_terms(n, &[(1, Mat2::new(ZERO_C, ZERO_C, c2, ZERO_C))]);

        let lhs = gauge_potential(&gauge_potential(&xi, &g1, &dg1).unwrap(), &g2, &dg2).unwrap();
        let g12 = g1.product(&g2).unwrap();
        let dg12 = dg1.product(&g2).unwrap().add(&g1.product(&dg2).unwrap()).unwrap();
        let rhs = gauge_potential(&xi, &g12, &dg12).unwrap();
        assert!(lhs.dist(&rhs) < 1e-11, "distance {:.3e}", lhs.dist(&rhs));
    }

    #[test]
    fn minoid_trinoid_alpha_is_real_positive() {
        // Symmetric minimal trinoid: g = z^2, omega = dz / (z^3 - 1)^2.
        let n = 8;
        let roots: Vec<C64> = (0..3)
            .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 3.0))
            .collect();
        let x = ParamVector {
            a: vec![
                LoopScalar::zero(n),
                LoopScalar::zero(n),
                LoopScalar::one(n),
            ],
            b: vec![
                LoopScalar::one(n),
                LoopScalar::zero(n),
                LoopScalar::zero(n),
            ],
            p: roots.iter().map(|p| LoopScalar::constant(n, *p)).collect(),
        };
        let pot = MinoidPotential::new(0.5, 0.01, x, n);
        for i in 0..3 {
            let end = minoid_end(&pot, i).unwrap();
            assert!(
                (end.alpha.re - 2.0 / 9.0).abs() < 1e-12,
                "alpha = {:?}",
                end.alpha
            );
            assert!(end.params.r <= end.params.s);
            // weight = 8 pi r s sinh q = 2 pi t alpha
            let w = 8.0 * std::f64::consts::PI * end.params.r * end.params.s * 0.5f64.sinh();
            let want = 2.0 * std::f64::consts::PI * pot.t * end.alpha.re;
            assert!((w - want).abs() < 1e-12);
        }
    }

    #[test]
    fn nnoid_end_potential_has_delaunay_residue() {
        // w * xi-hat(w) -> A_t as w -> 0.
        let q = 0.5;
        let cfg = NnoidConfig::symmetric(3, q);
        let x = nnoid_central_value(&cfg, 8).unwrap();
        let pot = NnoidPotential::new(q, 0.02, x, 8);
        let end = nnoid_end(&pot, 0).unwrap();
        for lam in [c(1.0, 0.0), c(0.2, 0.9), c(-0.7, -0.4)] {
            let lam = lam / lam.norm(); // unit circle
            let w = c(1e-6, 0.0);
            let v = end.eval_at(w, lam).unwrap().scale(w);
            let want = end.params.residue_at(lam);
            assert!(
                (v - want).norm() < 1e-4,
                "residue mismatch {:?} vs {:?}",
                v,
                want
            );
        }
    }

    #[test]
    fn nnoid_end_tilde_matches_direct_gauge() {
        // The closed-form xi-tilde agrees with gauging the pulled-back
        // potential by the square-root gauge, computed numerically.
        let q = 0.5;
        let cfg = NnoidConfig::symmetric(3, q);
        let x = nnoid_central_value(&cfg, 8).unwrap();
        let pot = NnoidPotential::new(q, 0.02, x.clone(), 8);
        let end = nnoid_end(&pot, 0).unwrap();
        let zeta = c(0.05, 0.02);
        let lam = C64::from_polar(1.0, 0.7);
        // Direct: G^{-1} (psi* xi) G + G^{-1} dG with numerical dG.
        let g = end.sqrt_gauge_at(zeta, lam);
        let eps = 1e-7;
        let dg = (end.sqrt_gauge_at(zeta + eps, lam) - end.sqrt_gauge_at(zeta - eps, lam))
            .scale(c(1.0 / (2.0 * eps), 0.0));
        let z_glob = zeta + x.p[0].eval(lam);
        let xi = pot.eval_at(z_glob, lam).unwrap();
        let gi = g.inverse().unwrap();
        let direct = gi * xi * g + gi * dg;
        let closed = end.tilde_at(zeta, lam).unwrap();
        assert!(
            (direct - closed).norm() < 1e-5,
            "gauge mismatch {:.3e}",
            (direct - closed).norm()
        );
    }
}
