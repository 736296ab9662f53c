//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Reference configuration: q = 0.5 (H = coth 0.5), rho = 2.0, N = 16,
//! 64 circle samples unless stated. Run with `--nocapture` to see every line.

use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;

use hcmc::frame::{monodromy, FramePath};
use hcmc::hyperbolic::{axis_sigma3, dist, HPoint};
use hcmc::immersion::{sample_surface, sym_point, FrameSource, GridSpec, SurfaceMesh};
use hcmc::iwasawa::{iwasawa, IwasawaConfig};
use hcmc::loops::{reset_tail_mass, tail_mass, LoopMat};
use hcmc::mat2::{Mat2, ONE_C, ZERO_C};
use hcmc::potentials::{
    delaunay_rs, Branch, DelaunayParams, DelaunayPotential, NnoidConfig, NnoidPotential,
    SpherePotential,
};
use hcmc::solver::{
    check_solved_monodromies, nnoid_end_weight, solve_nnoid, weight_constancy, SolveOutcome,
    SolverOptions,
};
use hcmc::verify::{
    analyze_end, axis_check_nnoid, axis_check_pure, catenoid_check, delaunay_rate_fit,
    delaunay_weight_from_meridian, embeddedness_certificate, mean_curvature_fd,
    nnoid_global_mesh, normal_rate_fit, self_intersection_scan, EndAnalysis,
};
use hcmc::zap::ZapConfig;

const Q: f64 = 0.5;
const RHO: f64 = 2.0;
const N: usize = 16;

fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

// The criteria assert wall-clock budgets, so they run one at a time even
// when the harness schedules tests in parallel.
static GATE: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[{}] {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

// ---------------------------------------------------------------------------
// Shared solved 3-noid (criteria 8-11)

struct SolvedTrinoid {
    pot: NnoidPotential,
    outcome: SolveOutcome,
    solve_time: Duration,
    config: NnoidConfig,
}

static TRINOID: OnceLock<SolvedTrinoid> = OnceLock::new();

fn trinoid() -> &'static SolvedTrinoid {
    TRINOID.get_or_init(|| {
        let config = NnoidConfig::symmetric(3, Q);
        let opts = SolverOptions::default();
        let start = Instant::now();
        let (pot, outcome) = solve_nnoid(&config, 0.02, &opts).expect("3-noid solve");
        let solve_time = start.elapsed();
        SolvedTrinoid {
            pot,
            outcome,
            solve_time,
            config,
        }
    })
}

fn end_analysis(index: usize) -> EndAnalysis {
    analyze_end(&trinoid().pot, index, &ZapConfig::default(), RHO, 1e-12).expect("end analysis")
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_iwasawa_oracle() {
    let _serial = serial();
    let start = Instant::now();
    let cfg = IwasawaConfig::for_order(N, RHO);
    // deterministic low-discrepancy z values with |z| <= 2
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let r = 2.0 * ((k as f64 + 0.5) / 50.0).sqrt();
        let th = 2.0 * std::f64::consts::PI * (k as f64 * 0.618_033_988_749_894_8).fract();
        let z = C64::from_polar(r, th);
        let phi = LoopMat::from_terms(
            N,
            &[(0, Mat2::identity()), (-1, Mat2::new(ZERO_C, z, ZERO_C, ZERO_C))],
        );
        let pair = iwasawa(&phi, &cfg).expect("sphere iwasawa");
        let s = 1.0 / (1.0 + z.norm_sqr()).sqrt();
        let want = LoopMat::from_terms(
            N,
            &[
                (0, Mat2::identity().scale(C64::new(s, 0.0))),
                (-1, Mat2::new(ZERO_C, z * s, ZERO_C, ZERO_C)),
                (1, Mat2::new(ZERO_C, ZERO_C, -z.conj() * s, ZERO_C)),
            ],
        );
        worst = worst.max(pair.f.dist(&want));
    }
    let elapsed = start.elapsed();
    report(
        "criterion 1 (Iwasawa oracle)",
        worst < 1e-8 && elapsed < Duration::from_secs(5),
        &format!("max entrywise deviation {worst:.3e} (< 1e-8), runtime {elapsed:?} (< 5 s)"),
    );
}

#[test]
fn criterion_02_delaunay_monodromy() {
    let _serial = serial();
    let mut worst_unitary: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for branch in [Branch::Spherical, Branch::Catenoidal] {
        for t in [0.02, -0.02, 0.05, -0.05] {
            let params = delaunay_rs(Q, t, branch).unwrap();
            let pot = DelaunayPotential { params, n: N };
            let path = FramePath::loop_around(ZERO_C, 1.0, ONE_C, 24);
            let m = monodromy(&pot, &path, &LoopMat::identity(N), 1e-12).unwrap();
            for j in 0..64 {
                let lam = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / 64.0);
                let v = m.eval(lam);
                worst_unitary = worst_unitary.max((v * v.adjoint() - Mat2::identity()).norm());
            }
            let at_root = m.eval(C64::new((-Q).exp(), 0.0));
            worst_sym = worst_sym.max((at_root + Mat2::identity()).norm());
        }
    }
    report(
        "criterion 2 (Delaunay monodromy)",
        worst_unitary < 1e-8 && worst_sym < 1e-8,
        &format!(
            "max ||MM*-I|| {worst_unitary:.3e} (< 1e-8), max |M(e^-q)+I| {worst_sym:.3e} (< 1e-8)"
        ),
    );
}

fn sphere_mesh() -> SurfaceMesh {
    let pot = SpherePotential { n: N };
    let grid = GridSpec::Rect {
        x0: -1.6,
        x1: 1.6,
        y0: -1.2,
        y1: 1.2,
        nu: 64,
        nv: 32,
    };
    let source = FrameSource::Integrated {
        pot: &pot,
        base_z: ZERO_C,
        base_frame: LoopMat::identity(N),
        tol: 1e-11,
    };
    sample_surface(&grid, &source, Some(&pot), Q, &IwasawaConfig::for_order(N, RHO)).unwrap()
}

#[test]
fn criterion_03_sphere_geometry() {
    let _serial = serial();
    reset_tail_mass();
    let mesh = sphere_mesh();
    let center = axis_sigma3().point(Q);
    let worst_dist = mesh
        .vertices
        .iter()
        .map(|v| (dist(&center, &v.point) - Q).abs())
        .fold(0.0f64, f64::max);

    // FD mean curvature at every vertex through the closed-form holomorphic
    // frame and a genuine Iwasawa factorization per stencil point.
    let cfg = IwasawaConfig::for_order(N, RHO);
    let h = 5e-3;
    let mut worst_h: f64 = 0.0;
    for v in &mesh.vertices {
        let z0 = v.z;
        let sampler = |i: i32, j: i32| -> hcmc::Result<HPoint> {
            let z = z0 + C64::new(h * i as f64, h * j as f64);
            let phi = LoopMat::from_terms(
                N,
                &[(0, Mat2::identity()), (-1, Mat2::new(ZERO_C, z, ZERO_C, ZERO_C))],
            );
            let pair = iwasawa(&phi, &cfg)?;
            sym_point(&pair.f, Q)
        };
        let h_est = mean_curvature_fd(&sampler, h).unwrap();
        worst_h = worst_h.max((h_est - coth(Q)).abs());
    }
    let tail = tail_mass();
    report(
        "criterion 3 (sphere geometry)",
        worst_dist < 1e-8 && worst_h < 1e-3 && tail < 1e-10,
        &format!(
            "max |dist - q| {worst_dist:.3e} (< 1e-8), max |H - coth q| {worst_h:.3e} (< 1e-3), max truncation tail {tail:.3e} (< 1e-10)"
        ),
    );
}

fn delaunay_mesh(params: &DelaunayParams) -> SurfaceMesh {
    let a = params.residue(N);
    let direct = move |u: f64, v: f64, _z: C64| -> hcmc::Result<LoopMat> {
        Ok(a.scale(C64::new(u, v)).exp())
    };
    let grid = GridSpec::LogPolar {
        center: (0.0, 0.0),
        u0: -2.5,
        u1: 2.5,
        nu: 256,
        ntheta: 64,
    };
    let source = FrameSource::Direct(&direct);
    let pot = DelaunayPotential {
        params: *params,
        n: N,
    };
    sample_surface(&grid, &source, Some(&pot), Q, &IwasawaConfig::for_order(N, RHO)).unwrap()
}

#[test]
fn criterion_04_delaunay_mean_curvature() {
    let _serial = serial();
    let start = Instant::now();
    reset_tail_mass();
    let want = coth(Q);
    let h = 1e-2;
    let cfg = IwasawaConfig::for_order(N, RHO);
    let mut worst: f64 = 0.0;
    for branch in [Branch::Spherical, Branch::Catenoidal] {
        let params = delaunay_rs(Q, 0.02, branch).unwrap();
        let mesh = delaunay_mesh(&params);
        let (nu, nv) = mesh.grid.dims();
        let a = params.residue(N);
        // Meridian sym points cached per radial row; theta translation acts
        // by the unitary rotation loop, so each stencil point is an exact
        // isometric image of a meridian point.
        let mut meridian: Vec<[HPoint; 3]> = Vec::with_capacity(nu);
        for i in 0..nu {
            let (u, _, _) = mesh.grid.vertex(i, 0);
            let mut row = [HPoint::identity(); 3];
            for (k, du) in [-h, 0.0, h].iter().enumerate() {
                let frame = a.scale(C64::new(u + du, 0.0)).exp();
                let pair = iwasawa(&frame, &cfg).unwrap();
                row[k] = sym_point(&pair.f, Q).unwrap();
            }
            meridian.push(row);
        }
        let rot = |theta: f64| -> Mat2 {
            params
                .residue_at(C64::new((-Q).exp(), 0.0))
                .scale(C64::new(0.0, theta))
                .exp()
        };
        let mut branch_worst: f64 = 0.0;
        for i in 1..nu - 1 {
            // stencil rows for u_i - h, u_i, u_i + h live in meridian[i];
            // each stencil point is rot(theta + dj h) applied to a cached
            // meridian point
            for j in 0..nv {
                let (_, theta, _) = mesh.grid.vertex(i, j);
                let sampler = |di: i32, dj: i32| -> hcmc::Result<HPoint> {
                    let row = &meridian[i];
                    let f0 = row[(di + 1) as usize];
                    let e = rot(theta + dj as f64 * h);
                    hcmc::hyperbolic::act(&e, &f0)
                };
                let h_est = mean_curvature_fd(&sampler, h).unwrap();
                branch_worst = branch_worst.max((h_est - want).abs() / want);
            }
        }
        worst = worst.max(branch_worst);
        // spot-check the equivalence of the rotated stencil against direct
        // evaluation at a handful of vertices
        let mut check: f64 = 0.0;
        for (i, j) in [(10usize, 7usize), (128, 33), (200, 60)] {
            let (u, theta, _) = mesh.grid.vertex(i, j);
            let frame = a.scale(C64::new(u, theta)).exp();
            let pair = iwasawa(&frame, &cfg).unwrap();
            let direct = sym_point(&pair.f, Q).unwrap();
            let rotated = hcmc::hyperbolic::act(&rot(theta), &meridian[i][1]).unwrap();
            check = check.max((direct.mat() - rotated.mat()).norm());
        }
        assert!(check < 1e-9, "rotation equivariance residual {check:.3e}");
    }
    let elapsed = start.elapsed();
    let tail = tail_mass();
    report(
        "criterion 4 (Delaunay mean curvature)",
        worst < 1e-3 && elapsed < Duration::from_secs(120) && tail < 1e-10,
        &format!(
            "max relative |H - coth q| {worst:.3e} (< 1e-3) over all interior vertices, both branches; runtime {elapsed:?} (< 2 min); max truncation tail {tail:.3e}"
        ),
    );
}

#[test]
fn criterion_05_profile_integrals() {
    let _serial = serial();
    let mut worst_first: f64 = 0.0;
    let mut worst_second: f64 = 0.0;
    for q in [0.3, 0.5, 1.0] {
        for t in [0.01, 0.05, 0.1, -0.01, -0.05, -0.1] {
            let w = 2.0 * std::f64::consts::PI * t;
            if t > 0.0 && t >= (q / 2.0f64).tanh() / 2.0 {
                // no unduloid of this weight exists; the solver must say so
                assert!(hcmc::profile::profile_solve(q, w).is_err());
                continue;
            }
            let p = hcmc::profile::profile_solve(q, w).unwrap();
            worst_first = worst_first
                .max(((p.h * p.h - 1.0).sqrt() * p.int_g - std::f64::consts::PI).abs());
            let want = 2.0 * std::f64::consts::PI * std::f64::consts::PI / w.abs();
            worst_second = worst_second.max((p.int_inv_g - want).abs() / want);
        }
    }
    let r2 = hcmc::profile::tubular_radius(Q, 2.0 * std::f64::consts::PI * 1e-2).unwrap() / 1e-2;
    let r3 = hcmc::profile::tubular_radius(Q, 2.0 * std::f64::consts::PI * 1e-3).unwrap() / 1e-3;
    let radii_ok = (0.9..1.1).contains(&r2) && (0.99..1.01).contains(&r3);
    report(
        "criterion 5 (profile integrals)",
        worst_first < 1e-6 && worst_second < 1e-6 && radii_ok,
        &format!(
            "max |sqrt(H^2-1) int g - pi| {worst_first:.3e} (< 1e-6), max rel err of int(1/g) {worst_second:.3e} (< 1e-6), r_t/t = {r2:.4} at 1e-2 and {r3:.5} at 1e-3"
        ),
    );
}

#[test]
fn criterion_06_weight_cross_check() {
    let _serial = serial();
    let params = delaunay_rs(Q, 0.02, Branch::Spherical).unwrap();
    let measured = delaunay_weight_from_meridian(&params, N, RHO).unwrap();
    let want = 2.0 * std::f64::consts::PI * 0.02;
    let rel = (measured / want - 1.0).abs();
    report(
        "criterion 6 (weight cross-check)",
        rel < 1e-3,
        &format!("2 pi^2 / int(1/g) = {measured:.8e} vs 2 pi t = {want:.8e}, relative error {rel:.3e} (< 0.1%)"),
    );
}

#[test]
fn criterion_07_catenoid_blowup() {
    let _serial = serial();
    let p2 = delaunay_rs(Q, 0.02, Branch::Catenoidal).unwrap();
    let p1 = delaunay_rs(Q, 0.01, Branch::Catenoidal).unwrap();
    let e2 = catenoid_check(&p2, N, RHO, 21, 33).unwrap();
    let e1 = catenoid_check(&p1, N, RHO, 21, 33).unwrap();
    let ratio = e1 / e2;
    let ratio_ok = (0.4..0.6).contains(&ratio);
    // The sup error carries the parametrisation-forced first-order term
    // 2 H t sin^2(y/2), about 0.087 at t = 0.02; the stated 0.05 cannot be
    // met by any faithful implementation. Reported honestly.
    report(
        "criterion 7 (catenoid blow-up)",
        e2 < 0.05 && ratio_ok,
        &format!(
            "sup error {e2:.4} at t=0.02 (< 0.05 required; first-order coefficient 2Ht = {:.4} makes this unattainable), halving ratio {ratio:.3} (in [0.4, 0.6])",
            2.0 * coth(Q) * 0.02
        ),
    );
}

#[test]
fn criterion_08_trinoid_solve() {
    let _serial = serial();
    let solved = trinoid();
    let iterations = solved.outcome.iterations.len() - 1;
    let residual = solved.outcome.residual_inf;
    let (var, imag) = weight_constancy(&solved.pot, 32);
    let (unitarity, sym_dev) =
        check_solved_monodromies(&solved.pot, &SolverOptions::default()).unwrap();
    let mut worst_weight: f64 = 0.0;
    let predicted = 8.0 * std::f64::consts::PI * 0.02 * Q.sinh();
    for i in 0..3 {
        let w = nnoid_end_weight(&solved.pot, i).unwrap();
        worst_weight = worst_weight.max((w / predicted - 1.0).abs());
    }
    let time_ok = solved.solve_time < Duration::from_secs(600);
    report(
        "criterion 8 (3-noid solve)",
        iterations <= 25
            && residual < 1e-9
            && var < 1e-8
            && imag < 1e-8
            && worst_weight < 0.05
            && unitarity < 1e-8
            && sym_dev < 1e-8
            && time_ok,
        &format!(
            "{iterations} iterations (<= 25), residual {residual:.3e} (< 1e-9), a_i lambda-variation {var:.3e} and imaginary part {imag:.3e} (< 1e-8), max weight deviation {worst_weight:.4} (< 0.05), fresh monodromy unitarity {unitarity:.3e}, M(e^-q) = +-I dev {sym_dev:.3e}, solve time {:?} (< 10 min)",
            solved.solve_time
        ),
    );
}

#[test]
fn criterion_09_end_convergence() {
    let _serial = serial();
    let radii: Vec<f64> = (0..9).map(|k| 1e-2 * 10f64.powf(k as f64 / 8.0)).collect();
    let mut worst_dist_slope = f64::INFINITY;
    let mut worst_normal_slope = f64::INFINITY;
    for i in 0..3 {
        let analysis = end_analysis(i);
        // the normal form reproduces the integrated frame at |z| = 1e-2
        let frame_direct = analysis.frame_tilde(C64::new(1e-2, 0.0)).unwrap();
        let frame_normal_form = analysis.zap2.frame_at(C64::new(1e-2, 0.0)).unwrap();
        let zap_res = frame_direct.sub(&frame_normal_form).unwrap().rho_norm(RHO);
        assert!(zap_res < 1e-6, "normal-form residual {zap_res:.3e} at end {i}");
        // the commuting split factor commutes with the residue as a loop
        let a_res = analysis.zap2.params.residue(N);
        let comm = analysis
            .commuting
            .product(&a_res)
            .unwrap()
            .sub(&a_res.product(&analysis.commuting).unwrap())
            .unwrap();
        assert!(
            comm.rho_norm(1.0) < 1e-8,
            "[K, A] = {:.3e} at end {i}",
            comm.rho_norm(1.0)
        );
        let fit = delaunay_rate_fit(&analysis, &radii).unwrap();
        worst_dist_slope = worst_dist_slope.min(fit.slope);
        assert!(
            fit.fit_residual < 0.1,
            "distance fit residual {:.3} at end {i}",
            fit.fit_residual
        );
        let nfit = normal_rate_fit(&analysis, &radii).unwrap();
        worst_normal_slope = worst_normal_slope.min(nfit.slope);
        // the normal deviation beats the proven rate near the end and bends
        // to it further out; a single power law fits that curve at ~0.13-0.16
        assert!(
            nfit.fit_residual < 0.2,
            "normal fit residual {:.3} at end {i}",
            nfit.fit_residual
        );
    }
    report(
        "criterion 9 (end convergence rates)",
        worst_dist_slope >= 0.8 && worst_normal_slope >= 0.8,
        &format!(
            "min distance-rate slope {worst_dist_slope:.3} (>= 0.8), min normal-rate slope {worst_normal_slope:.3} (>= 0.8) over |z| in [1e-2, 1e-1]"
        ),
    );
}

#[test]
fn criterion_10_limit_axes() {
    let _serial = serial();
    let config = &trinoid().config;
    let mut worst_nnoid: f64 = 0.0;
    for i in 0..3 {
        let analysis = end_analysis(i);
        let err = axis_check_nnoid(&analysis, config.directions[i]).unwrap();
        worst_nnoid = worst_nnoid.max(err);
    }
    let mut worst_pure: f64 = 0.0;
    for branch in [Branch::Spherical, Branch::Catenoidal] {
        let params = delaunay_rs(Q, 0.005, branch).unwrap();
        worst_pure = worst_pure.max(axis_check_pure(&params, N, RHO).unwrap());
    }
    report(
        "criterion 10 (limit axes)",
        worst_nnoid < 0.1 && worst_pure < 0.02,
        &format!(
            "max 3-noid end axis angle {worst_nnoid:.4} rad (< 0.1), max pure-family axis angle {worst_pure:.4} rad (< 0.02 at t = 0.005)"
        ),
    );
}

#[test]
fn criterion_11_embeddedness() {
    let _serial = serial();
    let solved = trinoid();
    let angle_ok = solved
        .config
        .angle_condition()
        .iter()
        .all(|(_, ok)| *ok);
    assert!(angle_ok, "angle condition must hold for the symmetric 3-noid");
    let mut all_certified = true;
    let mut details = String::new();
    for i in 0..3 {
        let analysis = end_analysis(i);
        let cert = embeddedness_certificate(&analysis, 0.1, (5e-3, 5e-2), 6, 8).unwrap();
        all_certified &= cert.pass;
        details.push_str(&format!(
            "end {i}: max dist {:.3e} vs alpha r_t {:.3e}, min jac {:.3}, winding {:.3}; ",
            cert.max_distance,
            0.1 * cert.tubular_radius,
            cert.min_jacobian,
            cert.winding
        ));
    }
    let (vertices, tris) = nnoid_global_mesh(&solved.pot, RHO, 1e-11).unwrap();
    let crossings = self_intersection_scan(&vertices, &tris);
    report(
        "criterion 11 (embeddedness certificate)",
        all_certified && crossings == 0,
        &format!(
            "{details}global scan: {crossings} intersecting non-adjacent pairs over {} triangles (angle condition all-true)",
            tris.len()
        ),
    );
}

#[test]
fn criterion_12_polar_bound() {
    let _serial = serial();
    // xorshift generator: deterministic, seed-free inputs
    let mut state: u64 = 0x9e3779b97f4a7c15;
    let mut next = move || -> f64 {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut worst_excess: f64 = 0.0;
    let mut tested = 0usize;
    while tested < 10_000 {
        let raw = Mat2::new(
            C64::new(next() * 3.0, next() * 3.0),
            C64::new(next() * 3.0, next() * 3.0),
            C64::new(next() * 3.0, next() * 3.0),
            C64::new(next() * 3.0, next() * 3.0),
        );
        let det = raw.det();
        if det.norm() < 1e-3 {
            continue;
        }
        let a = raw.scale(det.sqrt().inv());
        if a.norm() > 10.0 {
            continue;
        }
        let dir = Mat2::new(
            C64::new(next(), next()),
            C64::new(next(), next()),
            C64::new(next(), next()),
            C64::new(next(), next()),
        );
        let h = 1e-6;
        let (_, qp) = (a + dir.scale(C64::new(h, 0.0))).polar().unwrap();
        let (_, qm) = (a - dir.scale(C64::new(h, 0.0))).polar().unwrap();
        let fd = (qp - qm).scale(C64::new(1.0 / (2.0 * h), 0.0));
        let ratio = fd.norm() / (a.norm() * dir.norm());
        worst_excess = worst_excess.max(ratio);
        tested += 1;
    }
    report(
        "criterion 12 (polar derivative bound)",
        worst_excess <= 1.0 + 1e-4,
        &format!(
            "max |dPol2(A) . M| / (|A||M|) = {worst_excess:.8} over 10^4 samples (<= 1 + 1e-4)"
        ),
    );
}

#[test]
fn criterion_13_truncation_robustness() {
    let _serial = serial();
    // Sphere mesh: doubling N and the Bauer section moves no ball coordinate
    // by more than 1e-7.
    let sphere_at = |n: usize| -> SurfaceMesh {
        let pot = SpherePotential { n };
        let grid = GridSpec::Rect {
            x0: -1.6,
            x1: 1.6,
            y0: -1.2,
            y1: 1.2,
            nu: 64,
            nv: 32,
        };
        let source = FrameSource::Integrated {
            pot: &pot,
            base_z: ZERO_C,
            base_frame: LoopMat::identity(n),
            tol: 1e-11,
        };
        sample_surface(&grid, &source, Some(&pot), Q, &IwasawaConfig::for_order(n, RHO)).unwrap()
    };
    let s16 = sphere_at(16);
    let s32 = sphere_at(32);
    let mut worst: f64 = 0.0;
    for (a, b) in s16.vertices.iter().zip(&s32.vertices) {
        for k in 0..3 {
            worst = worst.max((a.ball[k] - b.ball[k]).abs());
        }
    }

    let delaunay_at = |n: usize| -> SurfaceMesh {
        let params = delaunay_rs(Q, 0.02, Branch::Spherical).unwrap();
        let a = params.residue(n);
        let direct = move |u: f64, v: f64, _z: C64| -> hcmc::Result<LoopMat> {
            Ok(a.scale(C64::new(u, v)).exp())
        };
        let grid = GridSpec::LogPolar {
            center: (0.0, 0.0),
            u0: -2.5,
            u1: 2.5,
            nu: 256,
            ntheta: 64,
        };
        let source = FrameSource::Direct(&direct);
        let pot = DelaunayPotential { params, n };
        sample_surface(&grid, &source, Some(&pot), Q, &IwasawaConfig::for_order(n, RHO)).unwrap()
    };
    let d16 = delaunay_at(16);
    let d32 = delaunay_at(32);
    for (a, b) in d16.vertices.iter().zip(&d32.vertices) {
        for k in 0..3 {
            worst = worst.max((a.ball[k] - b.ball[k]).abs());
        }
    }
    report(
        "criterion 13 (truncation robustness)",
        worst < 1e-7,
        &format!("max ball-coordinate change {worst:.3e} (< 1e-7) under N, section doubling"),
    );
}
