//! Holomorphic frame integration d Phi = Phi xi along paths, and monodromies.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::loops::LoopMat;
use crate::mat2::Mat2;
use crate::potentials::Potential;
use crate::rk::{integrate, AdaptiveOptions};

/// Piecewise-linear integration path in the z-plane.
#[derive(Clone, Debug)]
pub struct FramePath {
    pub waypoints: Vec<C64>,
}

impl FramePath {
    pub fn line(a: C64, b: C64) -> Self {
        Self {
            waypoints: vec![a, b],
        }
    }

    /// Closed polygonal loop around `center`, starting and ending at `base`.
    /// The polygon approximating the circle keeps the winding of the circle,
    /// which is all a monodromy depends on.
    pub fn loop_around(center: C64, radius: f64, base: C64, segments: usize) -> Self {
        let mut pts = Vec::with_capacity(segments + 3);
        pts.push(base);
        let dir = base - center;
        let start_angle = dir.arg();
        let entry = center + C64::from_polar(radius, start_angle);
        pts.push(entry);
        for k in 1..=segments {
            let th = start_angle + 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
            pts.push(center + C64::from_polar(radius, th));
        }
        pts.push(base);
        Self { waypoints: pts }
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    /// Smallest distance from the path's waypoints to the potential's poles.
    pub fn clearance(&self, pot: &dyn Potential) -> f64 {
        self.waypoints
            .iter()
            .map(|z| pot.pole_distance(*z))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Straight path from a to b, detouring around any pole that the segment
/// grazes within `clearance`. Inserted waypoints are re-checked so a detour
/// cannot create a new near-pole segment.
pub fn path_avoiding(a: C64, b: C64, poles: &[C64], clearance: f64) -> FramePath {
    let mut waypoints = vec![a];
    segment_avoiding(a, b, poles, clearance, 3, &mut waypoints);
    waypoints.push(b);
    FramePath { waypoints }
}

fn segment_avoiding(
    a: C64,
    b: C64,
    poles: &[C64],
    clearance: f64,
    depth: usize,
    out: &mut Vec<C64>,
) {
    let dir = b - a;
    let len = dir.norm();
    if len < 1e-14 || depth == 0 {
        return;
    }
    let unit = dir / len;
    // nearest interior violation
    let mut worst: Option<(f64, C64)> = None;
    for p in poles {
        let rel = p - a;
        let along = (rel * unit.conj()).re;
        if along <= 1e-12 || along >= len - 1e-12 {
            continue;
        }
        let foot = a + unit * along;
        let offset = *p - foot;
        if offset.norm() < clearance {
            match worst {
                Some((d, _)) if offset.norm() >= d => {}
                _ => worst = Some((offset.norm(), *p)),
            }
        }
    }
    if let Some((d, p)) = worst {
        let foot_along = ((p - a) * unit.conj()).re;
        let foot = a + unit * foot_along;
        let offset = p - foot;
        // push the path to the far side of the clearance circle; a
        // near-collinear pole leaves only roundoff in `offset`, whose
        // direction is meaningless, so fall back to the left normal
        let side = if d < 1e-6 * clearance {
            unit * C64::new(0.0, 1.0)
        } else {
            -offset / offset.norm()
        };
        let wp = p + side * (clearance * 1.2);
        segment_avoiding(a, wp, poles, clearance, depth - 1, out);
        out.push(wp);
        segment_avoiding(wp, b, poles, clearance, depth - 1, out);
    }
}

fn options_for_segment(len: f64, tol: f64) -> AdaptiveOptions {
    AdaptiveOptions {
        rtol: tol / len.max(1e-3),
        atol: 1e-300,
        h_init: 0.1,
        h_min: 1e-12,
        h_max: 0.5,
        ..Default::default()
    }
}

/// Integrate the loop-valued Cauchy problem d Phi = Phi xi(z) dz along the
/// path, starting from `phi0` at the first waypoint.
pub fn integrate_frame(
    pot: &dyn Potential,
    path: &FramePath,
    phi0: &LoopMat,
    tol: f64,
) -> Result<LoopMat> {
    let mut phi = phi0.clone();
    for seg in path.waypoints.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if (b - a).norm() < 1e-15 {
            continue;
        }
        let dz = b - a;
        phi = integrate(
            phi,
            |u, y: &LoopMat| {
                let z = a + dz * u;
                let xi = pot.eval(z)?;
                y.product(&xi.scale(dz))
            },
            &options_for_segment(dz.norm(), tol),
            None,
        )?;
    }
    Ok(phi)
}

/// Pointwise-in-lambda frame integration: a single 2x2 Cauchy problem with
/// the spectral parameter frozen once for the whole path.
pub fn integrate_frame_at(
    pot: &dyn Potential,
    path: &FramePath,
    phi0: Mat2,
    lambda: C64,
    tol: f64,
) -> Result<Mat2> {
    let frozen = pot.freeze(lambda);
    let mut phi = phi0;
    for seg in path.waypoints.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if (b - a).norm() < 1e-15 {
            continue;
        }
        let dz = b - a;
        phi = integrate(
            phi,
            |u, y: &Mat2| {
                let z = a + dz * u;
                let xi = frozen.eval(z)?;
                Ok(*y * xi.scale(dz))
            },
            &options_for_segment(dz.norm(), tol),
            None,
        )?;
    }
    Ok(phi)
}

/// Monodromy of the frame along a closed path: Phi(end) Phi(start)^{-1}.
pub fn monodromy(
    pot: &dyn Potential,
    closed_path: &FramePath,
    phi0: &LoopMat,
    tol: f64,
) -> Result<LoopMat> {
    let first = closed_path.waypoints.first();
    let last = closed_path.waypoints.last();
    match (first, last) {
        (Some(a), Some(b)) if (a - b).norm() < 1e-12 => {}
        _ => return Err(Error::Parameter("monodromy path is not closed".into())),
    }
    let end = integrate_frame(pot, closed_path, phi0, tol)?;
    end.product(&phi0.inverse()?)
}

/// Pointwise monodromy at a single lambda.
pub fn monodromy_at(
    pot: &dyn Potential,
    closed_path: &FramePath,
    phi0: Mat2,
    lambda: C64,
    tol: f64,
) -> Result<Mat2> {
    let end = integrate_frame_at(pot, closed_path, phi0, lambda, tol)?;
    Ok(end * phi0.inverse()?)
}

/// Fixed-step fifth-order integration of the pointwise frame along a path.
/// The step count depends only on the path geometry, never on the potential
/// values, so the result is a smooth function of potential parameters; this
/// is what finite-difference Jacobians in the solver need.
pub fn integrate_frame_at_fixed(
    pot: &dyn Potential,
    path: &FramePath,
    phi0: Mat2,
    lambda: C64,
    steps_per_unit: f64,
) -> Result<Mat2> {
    let frozen = pot.freeze(lambda);
    let mut phi = phi0;
    for seg in path.waypoints.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = (b - a).norm();
        if len < 1e-15 {
            continue;
        }
        let dz = b - a;
        let steps = (len * steps_per_unit).ceil().max(4.0) as usize;
        let h = 1.0 / steps as f64;
        let rhs = |u: f64, y: &Mat2| -> Result<Mat2> {
            let z = a + dz * u;
            Ok(*y * frozen.eval(z)?.scale(dz))
        };
        for s in 0..steps {
            let u = s as f64 * h;
            phi = crate::rk::dp5_step(&phi, u, h, &rhs)?;
        }
    }
    Ok(phi)
}

/// Fixed-step pointwise monodromy; see `integrate_frame_at_fixed`.
pub fn monodromy_at_fixed(
    pot: &dyn Potential,
    closed_path: &FramePath,
    phi0: Mat2,
    lambda: C64,
    steps_per_unit: f64,
) -> Result<Mat2> {
    let end = integrate_frame_at_fixed(pot, closed_path, phi0, lambda, steps_per_unit)?;
    Ok(end * phi0.inverse()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat2::{ONE_C, ZERO_C};
    use crate::potentials::{
        delaunay_rs, nnoid_central_value, Branch, DelaunayPotential, NnoidConfig, NnoidPotential,
        SpherePotential,
    };

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    struct ZeroPotential(usize);
    impl Potential for ZeroPotential {
        fn order(&self) -> usize {
            self.0
        }
        fn eval_at(&self, _z: C64, _l: C64) -> Result<Mat2> {
            Ok(Mat2::zero())
        }
    }

    #[test]
    fn zero_potential_keeps_initial_frame() {
        let pot = ZeroPotential(4);
        let phi0 = LoopMat::from_terms(4, &[(0, Mat2::identity()), (1, Mat2::sigma1())]);
        let path = FramePath::line(c(0.0, 0.0), c(1.3, -0.4));
        let out = integrate_frame(&pot, &path, &phi0, 1e-11).unwrap();
        assert!(out.dist(&phi0) < 1e-12);
    }

    #[test]
    fn sphere_frame_closed_form() {
        let n = 6;
        let pot = SpherePotential { n };
        let z = c(0.8, 0.5);
        let path = FramePath::line(ZERO_C, z);
        let out = integrate_frame(&pot, &path, &LoopMat::identity(n), 1e-12).unwrap();
        let want = LoopMat::from_terms(
            n,
            &[(0, Mat2::identity()), (-1, Mat2::new(ZERO_C, z, ZERO_C, ZERO_C))],
        );
        assert!(out.dist(&want) < 1e-10, "dist {:.3e}", out.dist(&want));
    }

    #[test]
    fn delaunay_radial_matches_power() {
        let n = 12;
        let params = delaunay_rs(0.5, 0.02, Branch::Spherical).unwrap();
        let pot = DelaunayPotential { params, n };
        let x = 2.4f64;
        let path = FramePath::line(ONE_C, c(x, 0.0));
        let out = integrate_frame(&pot, &path, &LoopMat::identity(n), 1e-12).unwrap();
        let want = params.residue(n).scale(c(x.ln(), 0.0)).exp();
        assert!(out.dist(&want) < 1e-9, "dist {:.3e}", out.dist(&want));
    }

    #[test]
    fn monodromy_trivial_for_sphere() {
        let n = 6;
        let pot = SpherePotential { n };
        let path = FramePath::loop_around(c(0.3, 0.2), 0.7, c(1.5, 0.0), 12);
        let m = monodromy(&pot, &path, &LoopMat::identity(n), 1e-12).unwrap();
        assert!(m.dist(&LoopMat::identity(n)) < 1e-10);
    }

    #[test]
    fn delaunay_monodromy_is_exponential() {
        let n = 12;
        let params = delaunay_rs(0.5, 0.05, Branch::Catenoidal).unwrap();
        let pot = DelaunayPotential { params, n };
        let path = FramePath::loop_around(ZERO_C, 1.0, ONE_C, 24);
        let m = monodromy(&pot, &path, &LoopMat::identity(n), 1e-12).unwrap();
        let want = params
            .residue(n)
            .scale(c(0.0, 2.0 * std::f64::consts::PI))
            .exp();
        assert!(m.dist(&want) < 1e-9, "dist {:.3e}", m.dist(&want));
    }

    #[test]
    fn path_independence_of_homotopic_paths() {
        let n = 10;
        let params = delaunay_rs(0.5, -0.02, Branch::Spherical).unwrap();
        let pot = DelaunayPotential { params, n };
        let target = c(2.0, 1.0);
        let direct = FramePath::line(ONE_C, target);
        let detour = FramePath {
            waypoints: vec![ONE_C, c(1.5, -0.8), c(2.5, -0.3), target],
        };
        let a = integrate_frame(&pot, &direct, &LoopMat::identity(n), 1e-12).unwrap();
        let b = integrate_frame(&pot, &detour, &LoopMat::identity(n), 1e-12).unwrap();
        assert!(a.dist(&b) < 1e-9, "dist {:.3e}", a.dist(&b));
    }

    #[test]
    fn monodromy_trace_base_independent() {
        let n = 10;
        let params = delaunay_rs(0.5, 0.03, Branch::Spherical).unwrap();
        let pot = DelaunayPotential { params, n };
        let m1 = monodromy(
            &pot,
            &FramePath::loop_around(ZERO_C, 0.8, ONE_C, 20),
            &LoopMat::identity(n),
            1e-12,
        )
        .unwrap();
        // Different base point and radius, same homotopy class; conjugated
        // monodromy has the same trace as a scalar loop.
        let phi0 = integrate_frame(
            &pot,
            &FramePath::line(ONE_C, c(1.7, 0.9)),
            &LoopMat::identity(n),
            1e-12,
        )
        .unwrap();
        let m2 = monodromy(
            &pot,
            &FramePath::loop_around(ZERO_C, 1.3, c(1.7, 0.9), 20),
            &phi0,
            1e-12,
        )
        .unwrap();
        let tr1 = m1.entry(0, 0).add(&m1.entry(1, 1)).unwrap();
        let tr2 = m2.entry(0, 0).add(&m2.entry(1, 1)).unwrap();
        assert!(tr1.sub(&tr2).unwrap().rho_norm(1.0) < 1e-9);
    }

    #[test]
    fn nnoid_monodromy_identity_at_beta_roots() {
        // At lambda = e^{+-q} the n-noid potential is upper triangular with
        // exact primitive, so generator monodromies are the identity.
        let q = 0.5;
        let cfg = NnoidConfig::symmetric(3, q);
        let x = nnoid_central_value(&cfg, 8).unwrap();
        let pot = NnoidPotential::new(q, 0.04, x, 8);
        let poles = pot.poles();
        for lam in [c(q.exp(), 0.0), c((-q).exp(), 0.0)] {
            for pole in &poles {
                let path = FramePath::loop_around(*pole, 0.4, ZERO_C, 16);
                let m = monodromy_at(&pot, &path, Mat2::identity(), lam, 1e-11).unwrap();
                assert!(
                    (m - Mat2::identity()).norm() < 1e-9,
                    "monodromy {m:?} at lambda {lam}"
                );
            }
        }
    }

    #[test]
    fn pointwise_matches_loop_integration() {
        let n = 10;
        let q = 0.5;
        let cfg = NnoidConfig::symmetric(3, q);
        let x = nnoid_central_value(&cfg, n).unwrap();
        let pot = NnoidPotential::new(q, 0.02, x, n);
        let path = FramePath::line(ZERO_C, c(0.4, 0.25));
        let full = integrate_frame(&pot, &path, &LoopMat::identity(n), 1e-11).unwrap();
        for lam in [c(1.0, 0.0), C64::from_polar(1.0, 2.1)] {
            let pt = integrate_frame_at(&pot, &path, Mat2::identity(), lam, 1e-11).unwrap();
            assert!(
                (full.eval(lam) - pt).norm() < 1e-8,
                "mismatch {:.3e}",
                (full.eval(lam) - pt).norm()
            );
        }
    }

}
