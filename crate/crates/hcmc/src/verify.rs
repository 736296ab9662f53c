//! Independent numerical verification of generated surfaces: finite-difference
//! mean curvature, convergence rates of perturbed ends to Delaunay ends,
//! blow-up limits, limit axes, and embeddedness certificates.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{integrate_frame_at, path_avoiding, FramePath};
use crate::hyperbolic::{
    act, act_tangent, axis_angle, dist, fixed_axis, lorentz, parallel_transport, GeodesicLine,
    HPoint, TangentVec,
};
use crate::immersion::{blowup_point, normal_point, sym_point, MeshVertex};
use crate::iwasawa::{iwasawa, IwasawaConfig};
use crate::loops::{sample_count, LoopMat};
use crate::mat2::{Mat2, ZERO_C};
use crate::potentials::{nnoid_end, DelaunayParams, NnoidEnd, NnoidPotential};
use crate::profile::{normal_comparison_bound, tubular_radius};
use crate::zap::{
    frobenius_zap, loop_unitary_split, rotation_loop, second_order_gauge, SecondOrderGauge,
    SecondOrderGauged, ZapConfig, ZapForm,
};

/// One verification record, JSON-serializable for the run report.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub inputs: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn below(name: &str, inputs: String, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            inputs,
            measured,
            threshold,
            pass: measured < threshold,
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference mean curvature

/// Mean curvature from a local sampler of immersion points: second-order
/// central differences of the fundamental forms in the hyperboloid model.
/// The sampler provides f at integer offsets (i, j) in a 5x5 window around
/// the probe point, with grid step h in both directions.
pub fn mean_curvature_fd(
    sampler: &dyn Fn(i32, i32) -> Result<HPoint>,
    h: f64,
) -> Result<f64> {
    let f = |i: i32, j: i32| -> Result<[f64; 4]> { Ok(sampler(i, j)?.minkowski()) };
    let f00 = f(0, 0)?;
    let fp0 = f(1, 0)?;
    let fm0 = f(-1, 0)?;
    let f0p = f(0, 1)?;
    let f0m = f(0, -1)?;
    let fpp = f(1, 1)?;
    let fpm = f(1, -1)?;
    let fmp = f(-1, 1)?;
    let fmm = f(-1, -1)?;

    let mut fx = [0.0; 4];
    let mut fy = [0.0; 4];
    let mut fxx = [0.0; 4];
    let mut fyy = [0.0; 4];
    let mut fxy = [0.0; 4];
    for k in 0..4 {
        fx[k] = (fp0[k] - fm0[k]) / (2.0 * h);
        fy[k] = (f0p[k] - f0m[k]) / (2.0 * h);
        fxx[k] = (fp0[k] - 2.0 * f00[k] + fm0[k]) / (h * h);
        fyy[k] = (f0p[k] - 2.0 * f00[k] + f0m[k]) / (h * h);
        fxy[k] = (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * h * h);
    }

    let ip = |a: &[f64; 4], b: &[f64; 4]| -> f64 {
        -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    };
    let e = ip(&fx, &fx);
    let ff = ip(&fx, &fy);
    let g = ip(&fy, &fy);

    // Minkowski-orthogonal complement of span{f, fx, fy}: generalized cross
    // product w_d = eps_{d a b c} f^a fx^b fy^c with the index raised.
    let det3 = |a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]| -> f64 {
        a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0])
    };
    let drop = |v: &[f64; 4], d: usize| -> [f64; 3] {
        let mut out = [0.0; 3];
        let mut m = 0;
        for k in 0..4 {
            if k != d {
                out[m] = v[k];
                m += 1;
            }
        }
        out
    };
    let mut w = [0.0; 4];
    for d in 0..4 {
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        w[d] = sign * det3(&drop(&f00, d), &drop(&fx, d), &drop(&fy, d));
    }
    // lower the time index: w^0 = -w_0
    w[0] = -w[0];
    let wn = ip(&w, &w);
    if wn <= 0.0 {
        return Err(Error::Invalid("degenerate FD normal".into()));
    }
    let scale = 1.0 / wn.sqrt();
    for v in &mut w {
        *v *= scale;
    }
    let l = ip(&fxx, &w);
    let m = ip(&fxy, &w);
    let n = ip(&fyy, &w);
    let denom = e * g - ff * ff;
    if denom.abs() < 1e-300 {
        return Err(Error::Invalid("degenerate FD first fundamental form".into()));
    }
    let h_est = (l * g - 2.0 * m * ff + n * e) / (2.0 * denom);
    // The mean-curvature-vector orientation makes H positive.
    Ok(h_est.abs())
}

// ---------------------------------------------------------------------------
// Rate fits

#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    /// (|z|, distance) sample pairs.
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// root-mean-square residual of the log-log fit
    pub fit_residual: f64,
}

/// Least-squares slope of log(distance) against log |z|.
pub fn fit_loglog(samples: &[(f64, f64)]) -> Result<RateFit> {
    if samples.len() < 8 {
        return Err(Error::Parameter("rate fit needs at least 8 samples".into()));
    }
    let span = samples
        .iter()
        .map(|(r, _)| r)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(*r), hi.max(*r)));
    if span.1 / span.0 < 10.0 - 1e-9 {
        return Err(Error::Parameter("rate fit must span a decade".into()));
    }
    if samples.iter().any(|(_, d)| *d < 1e-10) {
        return Err(Error::Parameter(
            "distances at rounding level; fit would be degenerate".into(),
        ));
    }
    let xs: Vec<f64> = samples.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, d)| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(RateFit {
        samples: samples.to_vec(),
        slope,
        intercept,
        fit_residual: res,
    })
}

// ---------------------------------------------------------------------------
// Normalized end frames of a solved n-noid

/// Everything needed to compare one solved n-noid end with its Delaunay
/// comparison surface: the normalized end frame, its Frobenius form, and the
/// unitary part of the dressing.
pub struct EndAnalysis {
    pub end: NnoidEnd,
    /// First-order Frobenius form of the hatted frame.
    pub zap: ZapForm,
    /// Admissible gauge removing the first Taylor coefficient.
    pub gauge: SecondOrderGauge,
    /// Frobenius form after the gauge: P = I + O(t z^2). The comparison
    /// surface and axes come from this frame, as the convergence statement
    /// requires.
    pub zap2: ZapForm,
    pub unitary: LoopMat,
    pub commuting: LoopMat,
    pub n: usize,
    pub q: f64,
    iw: IwasawaConfig,
    pot: NnoidPotential,
    ode_tol: f64,
}

impl EndAnalysis {
    /// The fully normalized end frame
    /// F(w) = H Q_i^{-1} Phi(h(w) + p_i(lambda)) G_t(h(w)) G(w),
    /// assembled pointwise over the sample circle.
    pub fn frame_hat(&self, w: C64) -> Result<LoopMat> {
        let m = sample_count(self.n);
        let samples: Result<Vec<Mat2>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let lam = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64);
                self.frame_hat_at(w, lam)
            })
            .collect();
        Ok(LoopMat::from_samples(self.n, &samples?))
    }

    pub fn frame_hat_at(&self, w: C64, lam: C64) -> Result<Mat2> {
        let zeta = self.end.h_map(w);
        let pole = self.pot.x.p[self.end.index].eval(lam);
        let z_target = zeta + pole;
        // Targets sit close to the pole, and the solved pole itself moves
        // with lambda (by several multiples of t). Approach in three stages:
        // walk to a fixed staging point outside the drift region, hop to the
        // staging point of the actual lambda-pole, then descend radially in
        // the target direction; the last leg never gets closer than |zeta|.
        // The staging geometry is shared by every spectral sample, keeping
        // all samples of one loop in the same homotopy class.
        let dir = zeta / zeta.norm();
        let stage0 = self.end.pi + dir * 0.30;
        let stage_lam = pole + dir * 0.25;
        let mut path = path_avoiding(ZERO_C, stage0, &self.pot.poles(), 0.25);
        path.waypoints.push(stage_lam);
        path.waypoints.push(z_target);
        let phi = integrate_frame_at(&self.pot, &path, Mat2::identity(), lam, self.ode_tol)?;
        let d = self.end.dressing_at(lam);
        let gt = self.end.sqrt_gauge_at(zeta, lam);
        let g2 = self.end.second_gauge_at(w, lam);
        Ok(d * phi * gt * g2)
    }

    /// The second-order-normalized end frame at w: the hatted frame at
    /// h_t(w), gauged by exp(g z).
    pub fn frame_tilde(&self, w: C64) -> Result<LoopMat> {
        let z = self.gauge.h_map(w)?;
        self.frame_hat(z)?.product(&self.gauge.gauge_loop(z))
    }

    /// Immersion point and normal of the perturbed end at w (in the
    /// second-order coordinate).
    pub fn immersion_at(&self, w: C64) -> Result<(HPoint, TangentVec)> {
        let frame = self.frame_tilde(w)?;
        let pair = iwasawa(&frame, &self.iw)?;
        Ok((sym_point(&pair.f, self.q)?, normal_point(&pair.f, self.q)?))
    }

    /// The comparison Delaunay frame M w^A evaluated and decomposed.
    pub fn comparison_at(&self, w: C64) -> Result<(HPoint, TangentVec)> {
        let frame = self.zap2.comparison_frame_at(w)?;
        let pair = iwasawa(&frame, &self.iw)?;
        Ok((sym_point(&pair.f, self.q)?, normal_point(&pair.f, self.q)?))
    }

    /// Axis of the comparison Delaunay surface, oriented towards the w = 0 end.
    pub fn comparison_axis(&self) -> Result<GeodesicLine> {
        let theta0 = 0.7;
        let rot = rotation_loop(&self.unitary, &self.zap2.params, theta0, self.n)?;
        let line = fixed_axis(&rot.eval(C64::new((-self.q).exp(), 0.0)))?;
        orient_towards_end(line, &|w| Ok(self.comparison_at(w)?.0))
    }
}

/// Flip the axis direction if needed so that walking in the direction of the
/// axis follows the end w -> 0.
fn orient_towards_end(
    line: GeodesicLine,
    surface: &dyn Fn(C64) -> Result<HPoint>,
) -> Result<GeodesicLine> {
    let s_of = |p: &HPoint| -> f64 {
        let a = lorentz(&p.mat(), &line.p.mat());
        let b = lorentz(&p.mat(), &line.v.v);
        (-b / a).atanh()
    };
    let outer = surface(C64::new(5e-2, 0.0))?;
    let inner = surface(C64::new(5e-3, 0.0))?;
    if s_of(&inner) >= s_of(&outer) {
        Ok(line)
    } else {
        Ok(line.reversed())
    }
}

/// Build the full end analysis of a solved n-noid end: the normalizing data,
/// the Frobenius normal form of the hatted frame, and the M = U K split.
pub fn analyze_end(
    pot: &NnoidPotential,
    index: usize,
    zap_cfg: &ZapConfig,
    rho: f64,
    ode_tol: f64,
) -> Result<EndAnalysis> {
    let end = nnoid_end(pot, index)?;
    let n = pot.n;
    let iw = IwasawaConfig::for_order(n, rho);
    let empty_zap = ZapForm {
        params: end.params,
        n,
        m: LoopMat::identity(n),
        p: vec![LoopMat::identity(n)],
        c: Vec::new(),
        min_resonance_gap: f64::INFINITY,
        deflation_remainder: 0.0,
    };
    let mut analysis = EndAnalysis {
        end: end.clone(),
        zap: empty_zap.clone(),
        gauge: SecondOrderGauge {
            p: crate::mat2::ZERO_C,
            g: LoopMat::zero(n),
        },
        zap2: empty_zap,
        unitary: LoopMat::identity(n),
        commuting: LoopMat::identity(n),
        n,
        q: pot.q,
        iw,
        pot: pot.clone(),
        ode_tol,
    };
    let frame_at = |z: C64| analysis.frame_hat(z);
    let zap = frobenius_zap(&end.params, &end, &frame_at, zap_cfg, n)?;
    let gauge = second_order_gauge(&zap)?;
    let gauged = SecondOrderGauged {
        inner: &end,
        gauge: gauge.clone(),
    };
    let frame2_at = |w: C64| -> Result<LoopMat> {
        let z = gauge.h_map(w)?;
        analysis.frame_hat(z)?.product(&gauge.gauge_loop(z))
    };
    let zap2 = frobenius_zap(&end.params, &gauged, &frame2_at, zap_cfg, n)?;
    let (u, k) = loop_unitary_split(&zap2.m)?;
    analysis.zap = zap;
    analysis.gauge = gauge;
    analysis.zap2 = zap2;
    analysis.unitary = u;
    analysis.commuting = k;
    Ok(analysis)
}

/// Distances between the perturbed end and its Delaunay comparison along the
/// positive ray, log-log fitted.
pub fn delaunay_rate_fit(analysis: &EndAnalysis, radii: &[f64]) -> Result<RateFit> {
    let samples: Result<Vec<(f64, f64)>> = radii
        .iter()
        .map(|r| {
            let w = C64::new(*r, 0.0);
            let (f, _) = analysis.immersion_at(w)?;
            let (fd, _) = analysis.comparison_at(w)?;
            Ok((*r, dist(&f, &fd)))
        })
        .collect();
    fit_loglog(&samples?)
}

/// Normal-map version: parallel-transported Gauss map differences.
pub fn normal_rate_fit(analysis: &EndAnalysis, radii: &[f64]) -> Result<RateFit> {
    let samples: Result<Vec<(f64, f64)>> = radii
        .iter()
        .map(|r| {
            let w = C64::new(*r, 0.0);
            let (f, nf) = analysis.immersion_at(w)?;
            let (fd, nd) = analysis.comparison_at(w)?;
            let moved = parallel_transport(&f, &fd, &nf)?;
            let diff = moved.v - nd.v;
            let norm = lorentz(&diff, &diff).max(0.0).sqrt();
            Ok((*r, norm))
        })
        .collect();
    fit_loglog(&samples?)
}

// ---------------------------------------------------------------------------
// Catenoid blow-up check

/// Sup over the (x, y) grid of |(f_t - I)/t - psi| for the catenoidal family,
/// with psi(x, y) = (x, cosh x sin y, 1 - cosh x cos y).
pub fn catenoid_check(
    params: &DelaunayParams,
    n: usize,
    rho: f64,
    nx: usize,
    ny: usize,
) -> Result<f64> {
    if params.t == 0.0 {
        return Err(Error::Parameter("catenoid check needs t != 0".into()));
    }
    let iw = IwasawaConfig::for_order(n, rho);
    let a = params.residue(n);
    let pts: Vec<(f64, f64)> = (0..nx)
        .flat_map(|i| {
            (0..ny).map(move |j| {
                (
                    -1.0 + 2.0 * i as f64 / (nx as f64 - 1.0),
                    2.0 * std::f64::consts::PI * j as f64 / (ny as f64 - 1.0),
                )
            })
        })
        .collect();
    let worst = pts
        .par_iter()
        .map(|(x, y)| -> Result<f64> {
            let f = a.scale(C64::new(*x, *y)).exp();
            let pair = iwasawa(&f, &iw)?;
            let p = sym_point(&pair.f, params.q)?;
            let w = blowup_point(&p, params.t)?;
            let want = [*x, x.cosh() * y.sin(), 1.0 - x.cosh() * y.cos()];
            Ok((0..3)
                .map(|k| (w[k] - want[k]).powi(2))
                .sum::<f64>()
                .sqrt())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(worst)
}

/// The synthetic input psi itself must pass with zero error.
pub fn catenoid_check_synthetic(nx: usize, ny: usize) -> f64 {
    let psi = |x: f64, y: f64| [x, x.cosh() * y.sin(), 1.0 - x.cosh() * y.cos()];
    let mut worst: f64 = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let x = -1.0 + 2.0 * i as f64 / (nx as f64 - 1.0);
            let y = 2.0 * std::f64::consts::PI * j as f64 / (ny as f64 - 1.0);
            let a = psi(x, y);
            let b = psi(x, y);
            worst = worst.max(
                (0..3)
                    .map(|k| (a[k] - b[k]).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Limit axes

/// Axis error of a solved n-noid end against the predicted limit
/// R(q) . geod(I2, u_i). The comparison axis is measured in the normalized
/// end coordinates; the inverse dressing maps it back to the global surface.
pub fn axis_check_nnoid(analysis: &EndAnalysis, direction: [f64; 3]) -> Result<f64> {
    let hat_axis = analysis.comparison_axis()?;
    let undress = analysis
        .end
        .dressing_at(C64::new((-analysis.q).exp(), 0.0))
        .adjugate();
    let measured = crate::hyperbolic::act_geodesic(&undress, &hat_axis)?;
    let q = analysis.q;
    let rq = Mat2::from_real((q / 2.0).exp(), 0.0, 0.0, (-q / 2.0).exp());
    let ui = crate::hyperbolic::from_minkowski(&[0.0, direction[0], direction[1], direction[2]]);
    let base = HPoint::identity();
    let v = TangentVec::new(base, ui)?;
    let predicted = GeodesicLine::new(act(&rq, &base)?, act_tangent(&rq, &v)?)?;
    axis_angle(&measured, &predicted)
}

/// Axis error of the pure Delaunay family (frame z^{A_t}) against the
/// Theorem limit axes: spherical family to the dressed -sigma3 axis,
/// catenoidal family to -sigma1.
pub fn axis_check_pure(params: &DelaunayParams, n: usize, rho: f64) -> Result<f64> {
    let theta0 = 0.7;
    let a = params.residue(n);
    let rot = a.scale(C64::new(0.0, theta0)).exp();
    let line = fixed_axis(&rot.eval(C64::new((-params.q).exp(), 0.0)))?;
    let iw = IwasawaConfig::for_order(n, rho);
    let q = params.q;
    let surface = |w: C64| -> Result<HPoint> {
        let frame = a.scale(w.ln()).exp();
        let pair = iwasawa(&frame, &iw)?;
        sym_point(&pair.f, q)
    };
    let measured = orient_towards_end(line, &surface)?;
    let base = HPoint::identity();
    let predicted = match params.branch {
        crate::potentials::Branch::Spherical => {
            let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
            let h = Mat2::from_real(inv_sqrt2, -q.exp() * inv_sqrt2, (-q).exp() * inv_sqrt2, inv_sqrt2);
            let v = TangentVec::new(base, -Mat2::sigma3())?;
            GeodesicLine::new(act(&h, &base)?, act_tangent(&h, &v)?)?
        }
        crate::potentials::Branch::Catenoidal => {
            let v = TangentVec::new(base, -Mat2::sigma1())?;
            GeodesicLine::new(base, v)?
        }
    };
    axis_angle(&measured, &predicted)
}

// ---------------------------------------------------------------------------
// Embeddedness certificate

#[derive(Clone, Debug, Serialize)]
pub enum CertificateFailure {
    DistanceExceeded { w: (f64, f64), distance: f64, bound: f64 },
    NonPositiveJacobian { w: (f64, f64), jacobian: f64 },
    WrongWinding { winding: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddednessCertificate {
    pub alpha: f64,
    pub tubular_radius: f64,
    pub max_distance: f64,
    pub min_jacobian: f64,
    pub winding: f64,
    pub pass: bool,
    pub failure: Option<CertificateFailure>,
}

/// Nearest-parameter projection onto the comparison Delaunay surface:
/// minimize dist(x, f_D(e^{u + i theta})) by local quadratic descent.
fn project_to_comparison(
    analysis: &EndAnalysis,
    x: &HPoint,
    start: (f64, f64),
) -> Result<(f64, f64)> {
    let eval = |u: f64, th: f64| -> Result<f64> {
        let w = C64::from_polar(u.exp(), th);
        let (p, _) = analysis.comparison_at(w)?;
        Ok(dist(x, &p))
    };
    let mut u = start.0;
    let mut th = start.1;
    let mut step = 0.05;
    let mut best = eval(u, th)?;
    for _ in 0..60 {
        let mut improved = false;
        for (du, dth) in [
            (step, 0.0),
            (-step, 0.0),
            (0.0, step),
            (0.0, -step),
        ] {
            let cand = eval(u + du, th + dth)?;
            if cand < best {
                best = cand;
                u += du;
                th += dth;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-7 {
                break;
            }
        }
    }
    Ok((u, th))
}

/// The per-end normal-graph certificate: (i) the perturbed end stays within
/// alpha r_t of the comparison surface, (ii) the projection to the comparison
/// surface has positive Jacobian, (iii) a loop around the end winds once.
pub fn embeddedness_certificate(
    analysis: &EndAnalysis,
    alpha: f64,
    annulus: (f64, f64),
    n_radial: usize,
    n_angular: usize,
) -> Result<EmbeddednessCertificate> {
    let w_end = 2.0 * std::f64::consts::PI * analysis.zap.params.t;
    let r_t = tubular_radius(analysis.q, w_end)?;
    let comparison = normal_comparison_bound(analysis.q, w_end, alpha)?;
    if !comparison.certified {
        return Err(Error::Invalid(format!(
            "normal comparison bound {:.3} not certified at alpha = {alpha}",
            comparison.bound
        )));
    }
    let bound = alpha * r_t;

    // (i) distance bound on the sampled annulus
    let mut max_distance: f64 = 0.0;
    let mut failure = None;
    'outer: for i in 0..n_radial {
        let r = annulus.0 * (annulus.1 / annulus.0).powf(i as f64 / (n_radial as f64 - 1.0));
        for j in 0..n_angular {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n_angular as f64;
            let w = C64::from_polar(r, th);
            let (f, _) = analysis.immersion_at(w)?;
            let (fd, _) = analysis.comparison_at(w)?;
            let d = dist(&f, &fd);
            max_distance = max_distance.max(d);
            if d >= bound {
                failure = Some(CertificateFailure::DistanceExceeded {
                    w: (w.re, w.im),
                    distance: d,
                    bound,
                });
                break 'outer;
            }
        }
    }

    // (ii) positive Jacobian of the projection at a radial selection
    let mut min_jacobian = f64::INFINITY;
    if failure.is_none() {
        let r_mid = (annulus.0 * annulus.1).sqrt();
        for j in 0..4 {
            let th = std::f64::consts::PI * j as f64 / 2.0;
            let w = C64::from_polar(r_mid, th);
            let jac = projection_jacobian(analysis, w)?;
            min_jacobian = min_jacobian.min(jac);
            if jac <= 0.0 {
                failure = Some(CertificateFailure::NonPositiveJacobian {
                    w: (w.re, w.im),
                    jacobian: jac,
                });
                break;
            }
        }
    }

    // (iii) winding of the projected angular coordinate
    let mut winding = 0.0;
    if failure.is_none() {
        let r_mid = (annulus.0 * annulus.1).sqrt();
        let steps = 12;
        let mut prev = None;
        let mut total = 0.0;
        for j in 0..=steps {
            let th = 2.0 * std::f64::consts::PI * j as f64 / steps as f64;
            let w = C64::from_polar(r_mid, th);
            let (f, _) = analysis.immersion_at(w)?;
            let (_, th_p) = project_to_comparison(analysis, &f, (r_mid.ln(), th))?;
            if let Some(p) = prev {
                let mut d = th_p - p;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                total += d;
            }
            prev = Some(th_p);
        }
        winding = total / (2.0 * std::f64::consts::PI);
        if (winding - 1.0).abs() > 0.2 {
            failure = Some(CertificateFailure::WrongWinding { winding });
        }
    }

    Ok(EmbeddednessCertificate {
        alpha,
        tubular_radius: r_t,
        max_distance,
        min_jacobian,
        winding,
        pass: failure.is_none(),
        failure,
    })
}

/// Finite-difference Jacobian determinant of w -> (u, theta) projection
/// coordinates on the comparison surface.
fn projection_jacobian(analysis: &EndAnalysis, w: C64) -> Result<f64> {
    let h = 0.05;
    let proj = |w: C64| -> Result<(f64, f64)> {
        let (f, _) = analysis.immersion_at(w)?;
        project_to_comparison(analysis, &f, (w.norm().ln(), w.arg()))
    };
    let r = w.norm();
    let up = proj(w * (1.0 + h))?;
    let um = proj(w * (1.0 - h))?;
    let vp = proj(w * C64::from_polar(1.0, h))?;
    let vm = proj(w * C64::from_polar(1.0, -h))?;
    let wrap = |d: f64| -> f64 {
        let mut d = d;
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        d
    };
    // d(u, th)/d(log r, arg w)
    let a = (up.0 - um.0) / (2.0 * h);
    let c = wrap(up.1 - um.1) / (2.0 * h);
    let b = (vp.0 - vm.0) / (2.0 * h);
    let d = wrap(vp.1 - vm.1) / (2.0 * h);
    let _ = r;
    Ok(a * d - b * c)
}

// ---------------------------------------------------------------------------
// Global self-intersection scan

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Aabb {
    fn of_triangle(v: &[[f64; 3]; 3]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in v {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Self { lo, hi }
    }

    fn union(&self, o: &Aabb) -> Aabb {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..3 {
            lo[k] = self.lo[k].min(o.lo[k]);
            hi[k] = self.hi[k].max(o.hi[k]);
        }
        Aabb { lo, hi }
    }

    fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.lo[k] <= o.hi[k] && o.lo[k] <= self.hi[k])
    }
}

enum BvhNode {
    Leaf(Vec<usize>),
    Split(Box<BvhNode>, Box<BvhNode>, Aabb, Aabb),
}

fn build_bvh(tris: &[[[f64; 3]; 3]], indices: Vec<usize>) -> BvhNode {
    if indices.len() <= 8 {
        return BvhNode::Leaf(indices);
    }
    let boxes: Vec<Aabb> = indices.iter().map(|i| Aabb::of_triangle(&tris[*i])).collect();
    let total = boxes.iter().skip(1).fold(boxes[0], |a, b| a.union(b));
    let mut axis = 0;
    let mut extent = 0.0;
    for k in 0..3 {
        let e = total.hi[k] - total.lo[k];
        if e > extent {
            extent = e;
            axis = k;
        }
    }
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|a, b| {
        let ca = boxes[*a].lo[axis] + boxes[*a].hi[axis];
        let cb = boxes[*b].lo[axis] + boxes[*b].hi[axis];
        ca.partial_cmp(&cb).unwrap()
    });
    let mid = order.len() / 2;
    let left: Vec<usize> = order[..mid].iter().map(|k| indices[*k]).collect();
    let right: Vec<usize> = order[mid..].iter().map(|k| indices[*k]).collect();
    let lbox = left
        .iter()
        .map(|i| Aabb::of_triangle(&tris[*i]))
        .reduce(|a, b| a.union(&b))
        .unwrap();
    let rbox = right
        .iter()
        .map(|i| Aabb::of_triangle(&tris[*i]))
        .reduce(|a, b| a.union(&b))
        .unwrap();
    BvhNode::Split(
        Box::new(build_bvh(tris, left)),
        Box::new(build_bvh(tris, right)),
        lbox,
        rbox,
    )
}

fn query_bvh(node: &BvhNode, tris: &[[[f64; 3]; 3]], target: &Aabb, out: &mut Vec<usize>) {
    match node {
        BvhNode::Leaf(idx) => {
            for i in idx {
                if Aabb::of_triangle(&tris[*i]).overlaps(target) {
                    out.push(*i);
                }
            }
        }
        BvhNode::Split(l, r, lbox, rbox) => {
            if lbox.overlaps(target) {
                query_bvh(l, tris, target, out);
            }
            if rbox.overlaps(target) {
                query_bvh(r, tris, target, out);
            }
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Separating-axis test for a pair of triangles. Reports true when no
/// separating axis exists (the triangles touch or intersect).
fn triangles_intersect(t1: &[[f64; 3]; 3], t2: &[[f64; 3]; 3]) -> bool {
    let eps = 1e-12;
    let mut axes = Vec::with_capacity(11);
    let e1 = [sub(t1[1], t1[0]), sub(t1[2], t1[1]), sub(t1[0], t1[2])];
    let e2 = [sub(t2[1], t2[0]), sub(t2[2], t2[1]), sub(t2[0], t2[2])];
    axes.push(cross(e1[0], e1[1]));
    axes.push(cross(e2[0], e2[1]));
    for a in &e1 {
        for b in &e2 {
            axes.push(cross(*a, *b));
        }
    }
    for axis in axes {
        let len = dot(axis, axis).sqrt();
        if len < 1e-14 {
            continue;
        }
        let project = |t: &[[f64; 3]; 3]| -> (f64, f64) {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in t {
                let d = dot(*p, axis) / len;
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (lo, hi)
        };
        let (lo1, hi1) = project(t1);
        let (lo2, hi2) = project(t2);
        if hi1 < lo2 - eps || hi2 < lo1 - eps {
            return false;
        }
    }
    true
}

/// Count intersecting non-adjacent triangle pairs of a triangle soup in ball
/// coordinates. Adjacency means sharing a vertex index.
pub fn self_intersection_scan(vertices: &[MeshVertex], tris: &[[usize; 3]]) -> usize {
    let coords: Vec<[[f64; 3]; 3]> = tris
        .iter()
        .map(|t| [vertices[t[0]].ball, vertices[t[1]].ball, vertices[t[2]].ball])
        .collect();
    let bvh = build_bvh(&coords, (0..coords.len()).collect());
    let hits: usize = (0..coords.len())
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            query_bvh(&bvh, &coords, &Aabb::of_triangle(&coords[i]), &mut out);
            let mut count = 0;
            for j in out {
                if j <= i {
                    continue;
                }
                let shared = tris[i]
                    .iter()
                    .any(|a| tris[j].contains(a));
                if shared {
                    continue;
                }
                if triangles_intersect(&coords[i], &coords[j]) {
                    count += 1;
                }
            }
            count
        })
        .sum();
    hits
}

// ---------------------------------------------------------------------------
// Weight measurement through the period relation

/// Measure the weight of the Delaunay surface generated by the frame
/// M z^{A} through the period relation int(du / g) = 2 pi^2 / |w| on the
/// meridian, entirely from loop-pipeline data. `dressing` is M (identity for
/// the pure family).
pub fn delaunay_weight_from_meridian_dressed(
    params: &DelaunayParams,
    dressing: Option<&LoopMat>,
    n: usize,
    rho: f64,
) -> Result<f64> {
    let q = params.q;
    let a = params.residue(n);
    // far along the meridian the frame norm grows; the full section keeps
    // the positive factor's determinant pinned at 1
    let iw = IwasawaConfig::for_order(n, rho);
    // conformal factor in the log coordinate: 2 sinh q r b(e^u)^2
    let factor = |u: f64| -> Result<f64> {
        let mut frame = a.scale(C64::new(u, 0.0)).exp();
        if let Some(m) = dressing {
            frame = m.product(&frame)?;
        }
        let pair = iwasawa(&frame, &iw)?;
        let b = crate::iwasawa::b_metric_entry(&pair.b)?;
        Ok(2.0 * q.sinh() * params.r.abs() * b * b)
    };
    // Find the first neck (minimum of the conformal factor) on each side of
    // u = 0; scanning both ways keeps |u| within one period, where the
    // frames stay well conditioned. When u = 0 is itself a neck
    // (catenoidal parametrisation), one period is [0, first minimum].
    let du = 0.05;
    let u_max = 60.0;
    let scan = |dir: f64| -> Result<Option<f64>> {
        let mut prev2 = factor(0.0)?;
        let mut prev1 = factor(dir * du)?;
        let mut k = 2usize;
        while (k as f64) * du < u_max {
            let cur = factor(dir * k as f64 * du)?;
            if prev1 < prev2 && prev1 <= cur {
                let denom = prev2 - 2.0 * prev1 + cur;
                let shift = if denom.abs() > 1e-300 {
                    0.5 * (prev2 - cur) / denom
                } else {
                    0.0
                };
                return Ok(Some(dir * ((k - 1) as f64 + shift) * du));
            }
            prev2 = prev1;
            prev1 = cur;
            k += 1;
        }
        Ok(None)
    };
    let f0 = factor(0.0)?;
    let neck_at_zero = factor(du)? > f0 && factor(-du)? > f0;
    let (lo, hi) = if neck_at_zero {
        let up = scan(1.0)?.ok_or_else(|| {
            Error::NoConvergence("meridian period not found within the scan range".into())
        })?;
        (0.0, up)
    } else {
        let up = scan(1.0)?;
        let down = scan(-1.0)?;
        match (down, up) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => {
                return Err(Error::NoConvergence(
                    "meridian period not found within the scan range".into(),
                ))
            }
        }
    };
    let period = hi - lo;
    // Simpson quadrature of 1 / factor over one period
    let n_quad = 512; // even
    let h = period / n_quad as f64;
    let mut acc = 0.0;
    for j in 0..=n_quad {
        let u = lo + j as f64 * h;
        let w = if j == 0 || j == n_quad {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w / factor(u)?;
    }
    let integral = acc * h / 3.0;
    Ok(2.0 * std::f64::consts::PI * std::f64::consts::PI / integral * params.t.signum())
}

/// Pure-family version: frame z^{A_t}.
pub fn delaunay_weight_from_meridian(
    params: &DelaunayParams,
    n: usize,
    rho: f64,
) -> Result<f64> {
    delaunay_weight_from_meridian_dressed(params, None, n, rho)
}

// ---------------------------------------------------------------------------
// Global n-noid mesh

/// Assemble a global triangle mesh of a solved n-noid: a polar base grid over
/// the sphere-like body with disks cut out around the poles, plus one
/// log-polar patch per end. Patches stay clear of each other so the
/// self-intersection scan sees no seam contacts.
pub fn nnoid_global_mesh(
    pot: &NnoidPotential,
    rho: f64,
    ode_tol: f64,
) -> Result<(Vec<MeshVertex>, Vec<[usize; 3]>)> {
    let q = pot.q;
    let n = pot.n;
    let iw = IwasawaConfig::for_order(n, rho);
    let poles = pot.poles();
    let cut = 0.36; // base grid keeps this distance from the poles
    let patch_outer: f64 = 0.30; // end patches reach out to here
    let clearance = 0.3;

    let mut vertices: Vec<MeshVertex> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();

    // --- base polar grid, angles offset off the pole directions
    let n_r = 26;
    let n_phi = 42;
    let r_lo: f64 = 0.05;
    let r_hi: f64 = 7.0;
    let vert_index = |i: usize, j: usize| i * n_phi + j;
    let z_of = |i: usize, j: usize| -> C64 {
        let r = r_lo * (r_hi / r_lo).powf(i as f64 / (n_r as f64 - 1.0));
        let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n_phi as f64;
        C64::from_polar(r, phi)
    };
    let valid = |z: C64| -> bool { poles.iter().all(|p| (z - p).norm() > cut) };

    // column frames in parallel: each angular column is one ray outward,
    // hopping across the cut disks from valid vertex to valid vertex
    let columns: Result<Vec<Vec<Option<LoopMat>>>> = (0..n_phi)
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<Option<LoopMat>> = Vec::with_capacity(n_r);
            let mut cur_z = ZERO_C;
            let mut cur = LoopMat::identity(n);
            for i in 0..n_r {
                let z = z_of(i, j);
                if !valid(z) {
                    col.push(None);
                    continue;
                }
                let path = path_avoiding(cur_z, z, &poles, clearance);
                cur = crate::frame::integrate_frame(pot, &path, &cur, ode_tol)?;
                cur_z = z;
                col.push(Some(cur.clone()));
            }
            Ok(col)
        })
        .collect();
    let columns = columns?;

    let mut index_map: Vec<Option<usize>> = vec![None; n_r * n_phi];
    for i in 0..n_r {
        for j in 0..n_phi {
            if let Some(frame) = &columns[j][i] {
                let pair = iwasawa(frame, &iw)?;
                let point = sym_point(&pair.f, q)?;
                let normal = normal_point(&pair.f, q)?;
                index_map[vert_index(i, j)] = Some(vertices.len());
                vertices.push(MeshVertex {
                    z: z_of(i, j),
                    grid_uv: (i as f64, j as f64),
                    point,
                    normal,
                    metric: 0.0,
                    ball: point.to_ball(),
                });
            }
        }
    }
    for i in 0..n_r - 1 {
        for j in 0..n_phi {
            let jn = (j + 1) % n_phi;
            let quad = [
                index_map[vert_index(i, j)],
                index_map[vert_index(i, jn)],
                index_map[vert_index(i + 1, j)],
                index_map[vert_index(i + 1, jn)],
            ];
            if let [Some(a), Some(b), Some(c_), Some(d)] = quad {
                tris.push([a, b, c_]);
                tris.push([b, d, c_]);
            }
        }
    }

    // --- end patches: log-polar around each pole, integrated inward.
    // The solved poles move with the spectral parameter; the patch stops
    // above that drift radius, where the loop frame is still defined.
    for (pi_idx, p) in poles.iter().enumerate() {
        let n_u = 18;
        let n_th = 28;
        let drift: f64 = (0..32)
            .map(|j| {
                let lam = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / 32.0);
                (pot.x.p[pi_idx].eval(lam) - p).norm()
            })
            .fold(0.0, f64::max);
        let u_hi = f64::ln(patch_outer);
        let u_lo = (drift + 0.04).max(0.05).min(patch_outer * 0.9).ln();
        let base_offset = vertices.len();
        // anchor at the outermost ring, theta = 0
        let anchor_z = p + C64::new(patch_outer, 0.0);
        let anchor =
            crate::frame::integrate_frame(pot, &path_avoiding(ZERO_C, anchor_z, &poles, clearance), &LoopMat::identity(n), ode_tol)?;
        // outer ring first (sequential), then rays inward in parallel
        let mut ring = Vec::with_capacity(n_th);
        ring.push(anchor.clone());
        let ring_z = |jt: usize| -> C64 {
            p + C64::from_polar(
                patch_outer,
                2.0 * std::f64::consts::PI * jt as f64 / n_th as f64,
            )
        };
        for jt in 1..n_th {
            let prev = ring_z(jt - 1);
            let cur_z = ring_z(jt);
            let f = crate::frame::integrate_frame(
                pot,
                &FramePath::line(prev, cur_z),
                &ring[jt - 1],
                ode_tol,
            )?;
            ring.push(f);
        }
        let rays: Result<Vec<Vec<LoopMat>>> = (0..n_th)
            .into_par_iter()
            .map(|jt| {
                let mut out = Vec::with_capacity(n_u);
                let mut cur = ring[jt].clone();
                out.push(cur.clone());
                for iu in 1..n_u {
                    let u_prev = u_hi + (u_lo - u_hi) * (iu as f64 - 1.0) / (n_u as f64 - 1.0);
                    let u_cur = u_hi + (u_lo - u_hi) * iu as f64 / (n_u as f64 - 1.0);
                    let th = 2.0 * std::f64::consts::PI * jt as f64 / n_th as f64;
                    let za = p + C64::from_polar(u_prev.exp(), th);
                    let zb = p + C64::from_polar(u_cur.exp(), th);
                    cur = crate::frame::integrate_frame(
                        pot,
                        &FramePath::line(za, zb),
                        &cur,
                        ode_tol,
                    )?;
                    out.push(cur.clone());
                }
                Ok(out)
            })
            .collect();
        let rays = rays?;
        for (jt, ray) in rays.iter().enumerate() {
            for (iu, frame) in ray.iter().enumerate() {
                let u = u_hi + (u_lo - u_hi) * iu as f64 / (n_u as f64 - 1.0);
                let th = 2.0 * std::f64::consts::PI * jt as f64 / n_th as f64;
                let pair = iwasawa(frame, &iw)?;
                let point = sym_point(&pair.f, q)?;
                let normal = normal_point(&pair.f, q)?;
                vertices.push(MeshVertex {
                    z: p + C64::from_polar(u.exp(), th),
                    grid_uv: (u, th),
                    point,
                    normal,
                    metric: 0.0,
                    ball: point.to_ball(),
                });
            }
        }
        let idx = |jt: usize, iu: usize| base_offset + jt * n_u + iu;
        for jt in 0..n_th {
            let jn = (jt + 1) % n_th;
            for iu in 0..n_u - 1 {
                let a = idx(jt, iu);
                let b = idx(jn, iu);
                let c_ = idx(jt, iu + 1);
                let d = idx(jn, iu + 1);
                tris.push([a, b, c_]);
                tris.push([b, d, c_]);
            }
        }
    }
    Ok((vertices, tris))
}
