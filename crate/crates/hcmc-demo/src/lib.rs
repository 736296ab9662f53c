//! Interactive browser demo: Delaunay surfaces and spheres in the Poincare
//! ball, plus their rotational profile curves. Exposes three operations to
//! the page; resolutions are kept modest so parameter changes stay snappy.

use num_complex::Complex64 as C64;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use hcmc::immersion::{sample_surface, FrameSource, GridSpec};
use hcmc::iwasawa::IwasawaConfig;
use hcmc::loops::LoopMat;
use hcmc::potentials::{delaunay_rs, t_max, Branch, DelaunayPotential, SpherePotential};

#[derive(Serialize)]
struct MeshPayload {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    /// surface weight 2 pi t
    weight: f64,
    r: f64,
    s: f64,
    h: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct ProfilePayload {
    /// (conformal coordinate, distance to axis) samples over one period
    samples: Vec<[f64; 2]>,
    period: f64,
    neck_radius: f64,
    bulge_radius: f64,
    first_integral: f64,
    second_integral: f64,
    error: Option<String>,
}

fn err_mesh(msg: String) -> String {
    serde_json::to_string(&MeshPayload {
        vertices: Vec::new(),
        faces: Vec::new(),
        weight: 0.0,
        r: 0.0,
        s: 0.0,
        h: 0.0,
        error: Some(msg),
    })
    .unwrap()
}

/// Delaunay surface of weight 2 pi t in ball coordinates, as JSON.
#[wasm_bindgen]
pub fn delaunay_surface(q: f64, t: f64, spherical: bool, nu: usize, ntheta: usize) -> String {
    let n = 8;
    let branch = if spherical {
        Branch::Spherical
    } else {
        Branch::Catenoidal
    };
    let params = match delaunay_rs(q, t, branch) {
        Ok(p) => p,
        Err(e) => return err_mesh(e.to_string()),
    };
    let a = params.residue(n);
    let direct = move |u: f64, v: f64, _z: C64| -> hcmc::Result<LoopMat> {
        Ok(a.scale(C64::new(u, v)).exp())
    };
    let grid = GridSpec::LogPolar {
        center: (0.0, 0.0),
        u0: -2.2,
        u1: 2.2,
        nu: nu.clamp(8, 128),
        ntheta: ntheta.clamp(8, 96),
    };
    let source = FrameSource::Direct(&direct);
    let pot = DelaunayPotential { params, n };
    let mesh = match sample_surface(
        &grid,
        &source,
        Some(&pot),
        q,
        &IwasawaConfig { section: 3 * n, rho: 1.5f64.max(q.exp() * 1.1) },
    ) {
        Ok(m) => m,
        Err(e) => return err_mesh(e.to_string()),
    };
    let payload = MeshPayload {
        vertices: mesh.vertices.iter().map(|v| v.ball).collect(),
        faces: mesh.tris.clone(),
        weight: 2.0 * std::f64::consts::PI * t,
        r: params.r,
        s: params.s,
        h: params.h,
        error: None,
    };
    serde_json::to_string(&payload).unwrap()
}

/// Round sphere through the same pipeline, as JSON.
#[wasm_bindgen]
pub fn sphere_surface(q: f64, nu: usize, nv: usize) -> String {
    let n = 8;
    let pot = SpherePotential { n };
    let grid = GridSpec::Rect {
        x0: -1.8,
        x1: 1.8,
        y0: -1.8,
        y1: 1.8,
        nu: nu.clamp(8, 96),
        nv: nv.clamp(8, 96),
    };
    let source = FrameSource::Integrated {
        pot: &pot,
        base_z: C64::new(0.0, 0.0),
        base_frame: LoopMat::identity(n),
        tol: 1e-9,
    };
    let mesh = match sample_surface(
        &grid,
        &source,
        Some(&pot),
        q,
        &IwasawaConfig { section: 3 * n, rho: 1.5f64.max(q.exp() * 1.1) },
    ) {
        Ok(m) => m,
        Err(e) => return err_mesh(e.to_string()),
    };
    let payload = MeshPayload {
        vertices: mesh.vertices.iter().map(|v| v.ball).collect(),
        faces: mesh.tris.clone(),
        weight: 0.0,
        r: 0.5,
        s: 0.0,
        h: 1.0 / q.tanh(),
        error: None,
    };
    serde_json::to_string(&payload).unwrap()
}

/// Rotational profile of the Delaunay surface of weight 2 pi t: distance to
/// the axis over one period, with the period integrals.
#[wasm_bindgen]
pub fn delaunay_profile(q: f64, t: f64) -> String {
    let w = 2.0 * std::f64::consts::PI * t;
    let profile = match hcmc::profile::profile_solve(q, w) {
        Ok(p) => p,
        Err(e) => {
            return serde_json::to_string(&ProfilePayload {
                samples: Vec::new(),
                period: 0.0,
                neck_radius: 0.0,
                bulge_radius: 0.0,
                first_integral: 0.0,
                second_integral: 0.0,
                error: Some(e.to_string()),
            })
            .unwrap()
        }
    };
    let samples: Vec<[f64; 2]> = profile
        .samples
        .iter()
        .map(|(s, sigma, _)| [*s, (profile.tau * sigma.exp()).asinh()])
        .collect();
    let payload = ProfilePayload {
        samples,
        period: profile.period,
        neck_radius: (profile.tau * profile.a.sqrt()).asinh(),
        bulge_radius: (profile.tau * profile.b.sqrt()).asinh(),
        first_integral: (profile.h * profile.h - 1.0).sqrt() * profile.int_g,
        second_integral: profile.int_inv_g * w.abs() / (2.0 * std::f64::consts::PI * std::f64::consts::PI),
        error: None,
    };
    serde_json::to_string(&payload).unwrap()
}

/// Largest admissible weight parameter for the given q (exclusive).
#[wasm_bindgen]
pub fn weight_limit(q: f64) -> f64 {
    t_max(q)
}
