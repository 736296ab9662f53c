//! From frames to geometry: Sym-Bobenko points, normals, metric factors,
//! surface meshes, blow-ups and Weierstrass data.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{integrate_frame, FramePath};
use crate::hyperbolic::{HPoint, TangentVec};
use crate::iwasawa::{b_metric_entry, iwasawa, IwasawaConfig};
use crate::loops::LoopMat;
use crate::mat2::Mat2;
use crate::potentials::Potential;

/// Sym-Bobenko point f = F(e^{-q}) F(e^{-q})*. The evaluated frame is
/// projected back to unit determinant first: exact frames have det 1 and the
/// projection removes integration drift.
pub fn sym_point(f: &LoopMat, q: f64) -> Result<HPoint> {
    let s = unit_det_frame(f, q)?;
    HPoint::from_frame(&s)
}

/// Unit normal N = F(e^{-q}) sigma3 F(e^{-q})*, tangent at the Sym point and
/// oriented by the mean curvature vector.
pub fn normal_point(f: &LoopMat, q: f64) -> Result<TangentVec> {
    let s = unit_det_frame(f, q)?;
    let base = HPoint::from_frame(&s)?;
    TangentVec::new(base, s * Mat2::sigma3() * s.adjoint())
}

fn unit_det_frame(f: &LoopMat, q: f64) -> Result<Mat2> {
    let s = f.eval(C64::new((-q).exp(), 0.0));
    let det = s.det();
    if (det - crate::mat2::ONE_C).norm() > 1e-6 {
        return Err(Error::Invalid(format!(
            "frame determinant {det:.8} too far from 1 at the Sym point"
        )));
    }
    Ok(s.scale(det.sqrt().inv()))
}

/// Conformal factor 2 sinh q b(z)^2 |beta(z, 0)| of the immersion metric,
/// with beta the lambda^{-1} coefficient of the potential's upper-right entry.
pub fn metric_factor(b: &LoopMat, xi: &LoopMat, q: f64) -> Result<f64> {
    let bval = b_metric_entry(b)?;
    let beta0 = xi.entry(0, 1).coeff(-1);
    Ok(2.0 * q.sinh() * bval * bval * beta0.norm())
}

/// Hopf differential coefficient -2 beta(z,0) gamma(z,0) sinh q.
pub fn hopf(xi: &LoopMat, q: f64) -> C64 {
    let beta0 = xi.entry(0, 1).coeff(-1);
    let gamma0 = xi.entry(1, 0).coeff(0);
    -2.0 * q.sinh() * beta0 * gamma0
}

// ---------------------------------------------------------------------------
// Grids and meshes

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum GridSpec {
    /// z = x + i y on [x0, x1] x [y0, y1] with nu x nv vertices.
    Rect {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        nu: usize,
        nv: usize,
    },
    /// z = center + e^{u + i theta}: nu radial samples on [u0, u1], ntheta
    /// angular samples; the theta seam is closed.
    LogPolar {
        center: (f64, f64),
        u0: f64,
        u1: f64,
        nu: usize,
        ntheta: usize,
    },
}

impl GridSpec {
    pub fn vertex_count(&self) -> usize {
        match self {
            GridSpec::Rect { nu, nv, .. } => nu * nv,
            GridSpec::LogPolar { nu, ntheta, .. } => nu * ntheta,
        }
    }

    /// Grid coordinates (u, v) of vertex (i, j) and its z value.
    pub fn vertex(&self, i: usize, j: usize) -> (f64, f64, C64) {
        match self {
            GridSpec::Rect {
                x0,
                x1,
                y0,
                y1,
                nu,
                nv,
            } => {
                let u = x0 + (x1 - x0) * i as f64 / (*nu as f64 - 1.0);
                let v = y0 + (y1 - y0) * j as f64 / (*nv as f64 - 1.0);
                (u, v, C64::new(u, v))
            }
            GridSpec::LogPolar {
                center,
                u0,
                u1,
                nu,
                ntheta,
            } => {
                let u = u0 + (u1 - u0) * i as f64 / (*nu as f64 - 1.0);
                let v = 2.0 * std::f64::consts::PI * j as f64 / *ntheta as f64;
                let z = C64::new(center.0, center.1) + C64::from_polar(u.exp(), v);
                (u, v, z)
            }
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            GridSpec::Rect { nu, nv, .. } => (*nu, *nv),
            GridSpec::LogPolar { nu, ntheta, .. } => (*nu, *ntheta),
        }
    }

    fn wraps_v(&self) -> bool {
        matches!(self, GridSpec::LogPolar { .. })
    }
}

#[derive(Clone, Debug)]
pub struct MeshVertex {
    pub z: C64,
    pub grid_uv: (f64, f64),
    pub point: HPoint,
    pub normal: TangentVec,
    pub metric: f64,
    pub ball: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub q: f64,
    pub vertices: Vec<MeshVertex>,
    pub tris: Vec<[usize; 3]>,
    pub grid: GridSpec,
}

/// Where the frames of a mesh come from.
pub enum FrameSource<'a> {
    /// Integrate the Cauchy problem through the grid along a tree of paths.
    Integrated {
        pot: &'a dyn Potential,
        base_z: C64,
        base_frame: LoopMat,
        tol: f64,
    },
    /// Closed-form frame as a function of the grid coordinates and z.
    Direct(&'a (dyn Fn(f64, f64, C64) -> Result<LoopMat> + Sync)),
}

/// Frames at every grid vertex. For the integrated source the first grid row
/// (i = 0) is reached sequentially from the base point and every column is
/// then integrated independently (and in parallel) along increasing i.
fn grid_frames(grid: &GridSpec, source: &FrameSource) -> Result<Vec<LoopMat>> {
    let (nu, nv) = grid.dims();
    match source {
        FrameSource::Direct(f) => {
            let idx: Vec<(usize, usize)> = (0..nu)
                .flat_map(|i| (0..nv).map(move |j| (i, j)))
                .collect();
            let frames: Result<Vec<LoopMat>> = idx
                .par_iter()
                .map(|(i, j)| {
                    let (u, v, z) = grid.vertex(*i, *j);
                    f(u, v, z)
                })
                .collect();
            frames
        }
        FrameSource::Integrated {
            pot,
            base_z,
            base_frame,
            tol,
        } => {
            // anchor row: sequential walk along i = 0
            let mut anchors = Vec::with_capacity(nv);
            let (_, _, z00) = grid.vertex(0, 0);
            let mut cur = integrate_frame(
                *pot,
                &FramePath::line(*base_z, z00),
                base_frame,
                *tol,
            )?;
            anchors.push(cur.clone());
            for j in 1..nv {
                let (_, _, zprev) = grid.vertex(0, j - 1);
                let (_, _, znext) = grid.vertex(0, j);
                cur = integrate_frame(*pot, &FramePath::line(zprev, znext), &cur, *tol)?;
                anchors.push(cur.clone());
            }
            // columns in parallel
            let columns: Result<Vec<Vec<LoopMat>>> = (0..nv)
                .into_par_iter()
                .map(|j| {
                    let mut col = Vec::with_capacity(nu);
                    col.push(anchors[j].clone());
                    let mut cur = anchors[j].clone();
                    for i in 1..nu {
                        let (_, _, zprev) = grid.vertex(i - 1, j);
                        let (_, _, znext) = grid.vertex(i, j);
                        cur = integrate_frame(*pot, &FramePath::line(zprev, znext), &cur, *tol)?;
                        col.push(cur.clone());
                    }
                    Ok(col)
                })
                .collect();
            let columns = columns?;
            let mut frames = vec![LoopMat::identity(1); nu * nv];
            for (j, col) in columns.into_iter().enumerate() {
                for (i, f) in col.into_iter().enumerate() {
                    frames[i * nv + j] = f;
                }
            }
            Ok(frames)
        }
    }
}

/// Run the DPW recipe over a grid: frames, pointwise Iwasawa, Sym points,
/// normals, metric factors and ball coordinates.
pub fn sample_surface(
    grid: &GridSpec,
    source: &FrameSource,
    pot_for_metric: Option<&dyn Potential>,
    q: f64,
    iw: &IwasawaConfig,
) -> Result<SurfaceMesh> {
    let (nu, nv) = grid.dims();
    let frames = grid_frames(grid, source)?;
    let vertices: Result<Vec<MeshVertex>> = (0..nu * nv)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / nv, idx % nv);
            let (u, v, z) = grid.vertex(i, j);
            let pair = iwasawa(&frames[idx], iw)?;
            let point = sym_point(&pair.f, q)?;
            let normal = normal_point(&pair.f, q)?;
            let metric = match pot_for_metric {
                Some(p) => metric_factor(&pair.b, &p.eval(z)?, q)?,
                None => 0.0,
            };
            Ok(MeshVertex {
                z,
                grid_uv: (u, v),
                point,
                normal,
                metric,
                ball: point.to_ball(),
            })
        })
        .collect();
    let vertices = vertices?;

    let mut tris = Vec::new();
    let jmax = if grid.wraps_v() { nv } else { nv - 1 };
    for i in 0..nu.saturating_sub(1) {
        for j in 0..jmax {
            let jn = (j + 1) % nv;
            let a = i * nv + j;
            let b = i * nv + jn;
            let c = (i + 1) * nv + j;
            let d = (i + 1) * nv + jn;
            tris.push([a, b, c]);
            tris.push([b, d, c]);
        }
    }
    Ok(SurfaceMesh {
        q,
        vertices,
        tris,
        grid: grid.clone(),
    })
}

impl SurfaceMesh {
    /// Degenerate single-point "mesh" used by pipelines that only need one
    /// evaluation: one vertex, no faces.
    pub fn single_point(q: f64, z: C64, f: &LoopMat, iw: &IwasawaConfig) -> Result<Self> {
        let pair = iwasawa(f, iw)?;
        let point = sym_point(&pair.f, q)?;
        let normal = normal_point(&pair.f, q)?;
        Ok(Self {
            q,
            vertices: vec![MeshVertex {
                z,
                grid_uv: (0.0, 0.0),
                point,
                normal,
                metric: 0.0,
                ball: point.to_ball(),
            }],
            tris: Vec::new(),
            grid: GridSpec::Rect {
                x0: z.re,
                x1: z.re,
                y0: z.im,
                y1: z.im,
                nu: 1,
                nv: 1,
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Blow-ups and Weierstrass data

/// (f - I2) / t in the (sigma1, sigma2, sigma3) coordinates of T_{I2} H^3.
pub fn blowup_point(p: &HPoint, t: f64) -> Result<[f64; 3]> {
    if t == 0.0 {
        return Err(Error::Parameter("blow-up needs t != 0".into()));
    }
    let x = p.minkowski();
    Ok([x[1] / t, x[2] / t, x[3] / t])
}

/// Weierstrass data of the blow-up limit from a lambda-constant frame field:
/// g = a / c and omega = -4 sinh q c^2 d(beta)/dt at t = 0.
pub fn weierstrass_from_family(
    phi0: &Mat2,
    dbeta_dt: C64,
    q: f64,
) -> Result<(C64, C64)> {
    if phi0.c.norm() < 1e-14 {
        return Err(Error::Parameter(
            "frame lower-left entry vanishes; Gauss map undefined here".into(),
        ));
    }
    let g = phi0.a / phi0.c;
    let omega = -4.0 * q.sinh() * phi0.c * phi0.c * dbeta_dt;
    Ok((g, omega))
}

/// Integrate the Weierstrass representation W(z) = W(z0) + Re int (...) along
/// a polyline of z samples, given the (g, omega) fields. Trapezoid quadrature
/// on the sample resolution.
pub fn weierstrass_integrate(
    gw: &dyn Fn(C64) -> Result<(C64, C64)>,
    zs: &[C64],
) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(zs.len());
    let mut acc = [0.0f64; 3];
    out.push(acc);
    let integrand = |z: C64| -> Result<[C64; 3]> {
        let (g, w) = gw(z)?;
        Ok([
            (C64::new(1.0, 0.0) - g * g) * w * 0.5,
            (C64::new(1.0, 0.0) + g * g) * w * C64::new(0.0, 0.5),
            g * w,
        ])
    };
    let mut prev = integrand(zs[0])?;
    for k in 1..zs.len() {
        let cur = integrand(zs[k])?;
        let dz = zs[k] - zs[k - 1];
        for m in 0..3 {
            acc[m] += ((prev[m] + cur[m]) * dz * 0.5).re;
        }
        out.push(acc);
        prev = cur;
    }
    Ok(out)
}
