//! Rotational CMC profile curves: the conformal-factor ODE, its period, the
//! period integrals, neck/bulge radii and the maximal tubular radius. This is
//! ground truth independent of the loop-group pipeline.

use crate::error::{Error, Result};
use crate::rk::{integrate, AdaptiveOptions};

/// One period of the profile of a Delaunay surface of weight w and mean
/// curvature H = coth q, in the conformal coordinate s of the metric
/// g(s)^2 (ds^2 + dtheta^2) with g = tau e^sigma.
#[derive(Clone, Debug)]
pub struct ProfileData {
    pub q: f64,
    pub h: f64,
    pub w: f64,
    pub tau: f64,
    pub iota: f64,
    /// min and max of e^{2 sigma}
    pub a: f64,
    pub b: f64,
    /// period in the conformal coordinate
    pub period: f64,
    /// integral of g over one period
    pub int_g: f64,
    /// integral of 1/g over one period
    pub int_inv_g: f64,
    /// uniform samples of (s, sigma, sigma') over one period
    pub samples: Vec<(f64, f64, f64)>,
}

fn closed_form_ab(h: f64, tau: f64, iota: f64) -> Result<(f64, f64)> {
    let disc = 1.0 - 4.0 * tau * tau * (iota * h - tau * tau);
    if disc < 0.0 {
        return Err(Error::Parameter(format!(
            "weight out of range: discriminant {disc:.3e} negative"
        )));
    }
    let num_a = 1.0 - 2.0 * iota * tau * tau * h - disc.sqrt();
    let num_b = 1.0 - 2.0 * iota * tau * tau * h + disc.sqrt();
    let den = 2.0 * tau * tau * (h * h - 1.0);
    let (a, b) = (num_a / den, num_b / den);
    if a <= 0.0 || b <= a {
        return Err(Error::Parameter(format!(
            "profile range degenerate: a = {a:.3e}, b = {b:.3e}"
        )));
    }
    Ok((a, b))
}

/// sigma'' = tau^2 (H^2 - 1)(a b e^{-2 sigma} - e^{2 sigma}); integrating the
/// differentiated equation avoids the square-root singularity at the turning
/// points entirely.
fn accel(sigma: f64, c2: f64, ab: f64) -> f64 {
    c2 * (ab * (-2.0 * sigma).exp() - (2.0 * sigma).exp())
}

/// State: [sigma, sigma', int g, int 1/g].
fn rhs(y: &[f64], tau: f64, c2: f64, ab: f64) -> Vec<f64> {
    let g = tau * y[0].exp();
    vec![y[1], accel(y[0], c2, ab), g, 1.0 / g]
}

/// Advance the profile state by ds.
fn step_by(y: &[f64], ds: f64, tau: f64, c2: f64, ab: f64) -> Result<Vec<f64>> {
    integrate(
        y.to_vec(),
        |_, y| Ok(rhs(y, tau, c2, ab).iter().map(|v| v * ds).collect()),
        &AdaptiveOptions {
            rtol: 1e-12,
            atol: 1e-14,
            h_init: 0.1,
            h_min: 1e-12,
            h_max: 0.5,
        },
        None,
    )
}

/// Solve the profile ODE for weight w = 2 pi t != 0.
pub fn profile_solve(q: f64, w: f64) -> Result<ProfileData> {
    if q <= 0.0 {
        return Err(Error::Parameter("q must be positive".into()));
    }
    if w == 0.0 {
        return Err(Error::Parameter("weight 0 has no Delaunay profile".into()));
    }
    let h = 1.0 / q.tanh();
    let tau = (w.abs() / (2.0 * std::f64::consts::PI)).sqrt();
    let iota = w.signum();
    let (a, b) = closed_form_ab(h, tau, iota)?;
    let ab = a * b;
    let c2 = tau * tau * (h * h - 1.0);

    // Start at the neck: sigma = log(a)/2, sigma' = 0, sigma'' > 0.
    let y0 = vec![0.5 * a.ln(), 0.0, 0.0, 0.0];

    // March in windows, looking for the second zero of sigma' (the first is
    // the bulge at S/2, the second closes the period).
    let window = 0.25;
    let mut s = 0.0;
    let mut y = y0.clone();
    let mut crossings = 0usize;
    let mut period = None;
    'outer: for _ in 0..40_000 {
        let y_next = step_by(&y, window, tau, c2, ab)?;
        if y[1].signum() != y_next[1].signum() && s > 1e-9 {
            // refine the crossing by bisection on the window
            let mut lo = 0.0;
            let mut hi = window;
            let mut ylo = y.clone();
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let ymid = step_by(&ylo, mid - lo, tau, c2, ab)?;
                if ymid[1].signum() == ylo[1].signum() {
                    lo = mid;
                    ylo = ymid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-13 * (1.0 + s) {
                    break;
                }
            }
            crossings += 1;
            if crossings == 2 {
                let yfin = step_by(&ylo, 0.5 * (lo + hi) - lo, tau, c2, ab)?;
                period = Some((s + 0.5 * (lo + hi), yfin));
                break 'outer;
            }
        }
        s += window;
        y = y_next;
    }
    let (period, y_end) = period.ok_or_else(|| {
        Error::NoConvergence("profile period not found within the search range".into())
    })?;

    // Invariants of the solved profile.
    if (y_end[0] - y0[0]).abs() > 1e-8 {
        return Err(Error::Invalid(format!(
            "profile not periodic: sigma deviates by {:.3e}",
            (y_end[0] - y0[0]).abs()
        )));
    }
    if (ab - 1.0 / (h * h - 1.0)).abs() > 1e-10 * ab.max(1.0) {
        return Err(Error::Invalid("a b != 1/(H^2-1)".into()));
    }

    // Uniform samples over one period for downstream consumers.
    let n_samples = 512;
    let mut samples = Vec::with_capacity(n_samples + 1);
    let ds = period / n_samples as f64;
    let mut ys = y0.clone();
    samples.push((0.0, ys[0], ys[1]));
    for k in 1..=n_samples {
        ys = step_by(&ys, ds, tau, c2, ab)?;
        let sigma = ys[0];
        let e2 = (2.0 * sigma).exp();
        if e2 < a - 1e-6 || e2 > b + 1e-6 {
            return Err(Error::Invalid(format!(
                "profile leaves [a, b]: e^(2 sigma) = {e2:.6e}"
            )));
        }
        samples.push((k as f64 * ds, sigma, ys[1]));
    }

    Ok(ProfileData {
        q,
        h,
        w,
        tau,
        iota,
        a,
        b,
        period,
        int_g: y_end[2],
        int_inv_g: y_end[3],
        samples,
    })
}

impl ProfileData {
    /// sup of the second-fundamental-form norm over the profile, from the
    /// intrinsic curvature K = -sigma'' / g^2 and kappa1 + kappa2 = 2H,
    /// kappa1 kappa2 = K + 1.
    pub fn sup_second_fundamental(&self) -> f64 {
        let c2 = self.tau * self.tau * (self.h * self.h - 1.0);
        self.samples
            .iter()
            .map(|(_, sigma, _)| {
                let g = self.tau * sigma.exp();
                let k_int = -accel(*sigma, c2, self.a * self.b) / (g * g);
                let disc = (self.h * self.h - k_int - 1.0).max(0.0).sqrt();
                let k1 = self.h + disc;
                let k2 = self.h - disc;
                (k1 * k1 + k2 * k2).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Maximal embedded tubular radius asinh(tau sqrt(a)) of an unduloid.
pub fn tubular_radius(q: f64, w: f64) -> Result<f64> {
    if w <= 0.0 {
        return Err(Error::Parameter(
            "tubular radius defined on the unduloidal branch w > 0".into(),
        ));
    }
    let h = 1.0 / q.tanh();
    let tau = (w / (2.0 * std::f64::consts::PI)).sqrt();
    let (a, _) = closed_form_ab(h, tau, 1.0)?;
    Ok((tau * a.sqrt()).asinh())
}

/// Data of the normal-comparison certificate: transported Gauss maps of
/// points within distance alpha r_t of each other stay within 1.
#[derive(Clone, Copy, Debug)]
pub struct NormalComparison {
    pub alpha: f64,
    pub tubular_radius: f64,
    pub sup_ii: f64,
    /// sup ||II|| * amplification * alpha r_t; certified when < 1
    pub bound: f64,
    pub certified: bool,
}

/// Evaluate the sufficient condition for the normal-graph argument with the
/// measured curvature bound.
pub fn normal_comparison_bound(q: f64, w: f64, alpha: f64) -> Result<NormalComparison> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Parameter("alpha must lie in [0, 1)".into()));
    }
    let r_t = tubular_radius(q, w)?;
    let profile = profile_solve(q, w)?;
    let sup_ii = profile.sup_second_fundamental();
    if alpha == 0.0 {
        return Ok(NormalComparison {
            alpha,
            tubular_radius: r_t,
            sup_ii,
            bound: 0.0,
            certified: true,
        });
    }
    let amplification = r_t.tanh() / (r_t.tanh() - (alpha * r_t).tanh());
    let bound = sup_ii * amplification * alpha * r_t;
    Ok(NormalComparison {
        alpha,
        tubular_radius: r_t,
        sup_ii,
        bound,
        certified: bound < 1.0,
    })
}
