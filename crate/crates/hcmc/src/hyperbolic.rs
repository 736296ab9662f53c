//! The matrix model of hyperbolic 3-space: points are Hermitian positive
//! definite unit-determinant 2x2 matrices, SL(2,C) acts by A . p = A p A*.

use crate::error::{Error, Result};
use crate::mat2::{C64, Mat2, ONE_C};

const HERMITIAN_TOL: f64 = 1e-12;
const DET_TOL: f64 = 1e-10;

/// Point of H^3 in the Hermitian matrix model.
#[derive(Clone, Copy, Debug)]
pub struct HPoint {
    m: Mat2,
}

/// Tangent vector: a Hermitian matrix Lorentz-orthogonal to its base point.
#[derive(Clone, Copy, Debug)]
pub struct TangentVec {
    pub base: HPoint,
    pub v: Mat2,
}

/// Oriented geodesic through `p` with unit direction `v`.
#[derive(Clone, Copy, Debug)]
pub struct GeodesicLine {
    pub p: HPoint,
    pub v: TangentVec,
}

/// Minkowski coordinates (x0, x1, x2, x3) of a Hermitian matrix.
pub fn minkowski(m: &Mat2) -> Result<[f64; 4]> {
    if !m.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::Hyperbolic("matrix is not Hermitian".into()));
    }
    Ok([
        0.5 * (m.a.re + m.d.re),
        m.b.re,
        m.b.im,
        0.5 * (m.a.re - m.d.re),
    ])
}

pub fn from_minkowski(x: &[f64; 4]) -> Mat2 {
    Mat2::new(
        C64::new(x[0] + x[3], 0.0),
        C64::new(x[1], x[2]),
        C64::new(x[1], -x[2]),
        C64::new(x[0] - x[3], 0.0),
    )
}

/// Lorentzian inner product; equals -det on Hermitian matrices.
pub fn lorentz(x: &Mat2, y: &Mat2) -> f64 {
    let a = minkowski_unchecked(x);
    let b = minkowski_unchecked(y);
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

fn minkowski_unchecked(m: &Mat2) -> [f64; 4] {
    [
        0.5 * (m.a.re + m.d.re),
        m.b.re,
        m.b.im,
        0.5 * (m.a.re - m.d.re),
    ]
}

impl HPoint {
    /// Validate the invariants: Hermitian, det 1, positive trace.
    pub fn new(m: Mat2) -> Result<Self> {
        if !m.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::Hyperbolic(format!(
                "point not Hermitian within tolerance: dev = {:.3e}",
                (m - m.adjoint()).norm()
            )));
        }
        let m = m.hermitize();
        let det = m.det().re;
        if (det - 1.0).abs() > DET_TOL * (1.0 + m.norm(). powi(2)) {
            return Err(Error::Hyperbolic(format!(
                "point determinant {det:.12} differs from 1"
            )));
        }
        if m.trace().re <= 0.0 {
            return Err(Error::Hyperbolic("point trace not positive".into()));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: Mat2::identity(),
        }
    }

    /// The point F F* for F in SL(2,C).
    pub fn from_frame(f: &Mat2) -> Result<Self> {
        Self::new(*f * f.adjoint())
    }

    pub fn mat(&self) -> Mat2 {
        self.m
    }

    pub fn minkowski(&self) -> [f64; 4] {
        minkowski_unchecked(&self.m)
    }

    /// Poincare ball coordinates y_i = x_i / (1 + x0).
    pub fn to_ball(&self) -> [f64; 3] {
        let x = self.minkowski();
        [x[1] / (1.0 + x[0]), x[2] / (1.0 + x[0]), x[3] / (1.0 + x[0])]
    }

    /// Hermitian positive square root: the unique S with S . I = p.
    pub fn sqrt(&self) -> Mat2 {
        self.m.sqrt_hermitian().expect("HPoint is positive definite")
    }
}

impl TangentVec {
    pub fn new(base: HPoint, v: Mat2) -> Result<Self> {
        if !v.is_hermitian(1e-10) {
            return Err(Error::Hyperbolic("tangent vector not Hermitian".into()));
        }
        let v = v.hermitize();
        let ip = lorentz(&base.mat(), &v);
        if ip.abs() > 1e-8 * (1.0 + v.norm()) * (1.0 + base.mat().norm()) {
            return Err(Error::Hyperbolic(format!(
                "tangent vector not orthogonal to base: <p, v> = {ip:.3e}"
            )));
        }
        Ok(Self { base, v })
    }

    pub fn norm_sq(&self) -> f64 {
        lorentz(&self.v, &self.v)
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sq();
        if n <= 0.0 {
            return Err(Error::Hyperbolic("tangent vector not spacelike".into()));
        }
        Ok(Self {
            base: self.base,
            v: self.v.scale(C64::new(1.0 / n.sqrt(), 0.0)),
        })
    }

    /// Components in an orthonormal tangent frame at the identity
    /// (only meaningful when base = I2): the (sigma1, sigma2, sigma3) parts.
    pub fn sigma_components(&self) -> [f64; 3] {
        let x = minkowski_unchecked(&self.v);
        [x[1], x[2], x[3]]
    }
}

impl GeodesicLine {
    pub fn new(p: HPoint, v: TangentVec) -> Result<Self> {
        let v = v.normalized()?;
        Ok(Self { p, v })
    }

    pub fn point(&self, t: f64) -> HPoint {
        geod(&self.p, &self.v, t).expect("geodesic data validated")
    }

    pub fn reversed(&self) -> Self {
        Self {
            p: self.p,
            v: TangentVec {
                base: self.v.base,
                v: -self.v.v,
            },
        }
    }
}

/// Unit-speed geodesic: p cosh t + v sinh t.
pub fn geod(p: &HPoint, v: &TangentVec, t: f64) -> Result<HPoint> {
    let m = p.mat().scale(C64::new(t.cosh(), 0.0)) + v.v.scale(C64::new(t.sinh(), 0.0));
    HPoint::new(m)
}

/// Geodesic through the identity in direction sigma3.
pub fn axis_sigma3() -> GeodesicLine {
    let p = HPoint::identity();
    let v = TangentVec::new(p, Mat2::sigma3()).expect("sigma3 is tangent at identity");
    GeodesicLine::new(p, v).expect("unit direction")
}

/// The rigid motion A . p = A p A*.
pub fn act(a: &Mat2, p: &HPoint) -> Result<HPoint> {
    HPoint::new(*a * p.mat() * a.adjoint())
}

pub fn act_tangent(a: &Mat2, v: &TangentVec) -> Result<TangentVec> {
    let base = act(a, &v.base)?;
    TangentVec::new(base, *a * v.v * a.adjoint())
}

pub fn act_geodesic(a: &Mat2, g: &GeodesicLine) -> Result<GeodesicLine> {
    GeodesicLine::new(act(a, &g.p)?, act_tangent(a, &g.v)?)
}

/// Hyperbolic distance arccosh( tr(q^{-1} p) / 2 ), clamped at 1 below.
pub fn dist(p: &HPoint, q: &HPoint) -> f64 {
    let half_tr = (q.mat().adjugate() * p.mat()).trace().re * 0.5;
    half_tr.max(1.0).acosh()
}

/// Parallel transport of v in T_{I2} H^3 to p along the connecting geodesic:
/// conjugation by the positive square root of p.
pub fn parallel_transport_from_identity(p: &HPoint, v: &TangentVec) -> Result<TangentVec> {
    if (v.base.mat() - Mat2::identity()).norm() > 1e-10 {
        return Err(Error::Hyperbolic("vector is not based at the identity".into()));
    }
    act_tangent(&p.sqrt(), v)
}

/// General parallel transport built from the identity case by equivariance:
/// move p to the identity with p^{-1/2}, transport, move back.
pub fn parallel_transport(p: &HPoint, q: &HPoint, v: &TangentVec) -> Result<TangentVec> {
    let s = p.sqrt();
    let s_inv = s.inverse()?;
    let q0 = act(&s_inv, q)?;
    let v0 = act_tangent(&s_inv, v)?; // now based at the identity
    let moved = act_tangent(&q0.sqrt(), &v0)?;
    act_tangent(&s, &moved)
}

/// Polar decomposition A = S Q of an SL(2,C) matrix, with S = sqrt(A A*)
/// Hermitian positive definite and Q unitary.
pub fn polar(a: &Mat2) -> Result<(Mat2, Mat2)> {
    a.polar()
}

/// Fixed axis of an elliptic SL(2,C) element, oriented so the rotation angle
/// about the returned direction lies in (0, 2 pi).
pub fn fixed_axis(a: &Mat2) -> Result<GeodesicLine> {
    let det = a.det();
    if (det - ONE_C).norm() > 1e-8 {
        return Err(Error::Parameter(format!(
            "fixed_axis expects unit determinant, got {det:.6}"
        )));
    }
    let tr = a.trace();
    if tr.im.abs() > 1e-8 || tr.re.abs() >= 2.0 - 1e-12 {
        return Err(Error::NotElliptic(tr.re));
    }
    // Eigenvalues e^{+i theta/2}, e^{-i theta/2}; pick Im > 0 for theta in (0, 2 pi).
    let (l1, l2) = a.eigenvalues();
    let (lp, lm) = if l1.im > 0.0 { (l1, l2) } else { (l2, l1) };
    if lp.im <= 1e-14 {
        return Err(Error::NotElliptic(tr.re));
    }
    let vp = a.eigenvector(lp);
    let vm = a.eigenvector(lm);
    let mut p = Mat2::new(vp[0], vm[0], vp[1], vm[1]);
    let dp = p.det();
    if dp.norm() < 1e-14 {
        return Err(Error::NotElliptic(tr.re));
    }
    p = p.scale(dp.sqrt().inv());
    let base = act(&p, &HPoint::identity())?;
    let dir = act_tangent(
        &p,
        &TangentVec::new(HPoint::identity(), Mat2::sigma3())?,
    )?;
    GeodesicLine::new(base, dir)
}

/// Angle between the directions of two oriented geodesics after transporting
/// the first direction to the second's base point.
pub fn axis_angle(measured: &GeodesicLine, predicted: &GeodesicLine) -> Result<f64> {
    let moved = parallel_transport(&measured.p, &predicted.p, &measured.v)?;
    let ip = lorentz(&moved.v, &predicted.v.v);
    Ok(ip.clamp(-1.0, 1.0).acos())
}

/// Distance from a point to a geodesic line:
/// cosh d = sqrt(<x,p>^2 - <x,v>^2) at the foot of the perpendicular.
pub fn dist_to_line(x: &HPoint, line: &GeodesicLine) -> f64 {
    let a = -lorentz(&x.mat(), &line.p.mat());
    let b = lorentz(&x.mat(), &line.v.v);
    (a * a - b * b).max(1.0).sqrt().acosh()
}
