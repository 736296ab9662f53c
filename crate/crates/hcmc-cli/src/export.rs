//! Mesh, curve and report writers: ASCII OBJ in Poincare-ball coordinates,
//! CSV companions, JSON verification reports. Output is bit-stable for a
//! fixed configuration: fixed orderings, fixed float formatting.

use std::fmt::Write as _;
use std::path::Path;

use hcmc::hyperbolic::TangentVec;
use hcmc::immersion::MeshVertex;

/// Push the hyperbolic normal through the differential of the ball map
/// y_i = x_i / (1 + x0) and normalize to a unit Euclidean vector.
fn ball_normal(v: &TangentVec) -> [f64; 3] {
    let x = v.base.minkowski();
    let n = hcmc::hyperbolic::minkowski(&v.v).unwrap_or([0.0; 4]);
    let denom = 1.0 + x[0];
    let mut y = [0.0f64; 3];
    for k in 0..3 {
        y[k] = n[k + 1] / denom - x[k + 1] * n[0] / (denom * denom);
    }
    let len = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    if len > 1e-300 {
        for c in &mut y {
            *c /= len;
        }
    }
    y
}

pub fn write_obj(
    path: &Path,
    vertices: &[MeshVertex],
    tris: &[[usize; 3]],
) -> anyhow::Result<()> {
    let mut out = String::new();
    writeln!(out, "# CMC surface in Poincare ball coordinates")?;
    writeln!(out, "# vertices {} faces {}", vertices.len(), tris.len())?;
    for v in vertices {
        writeln!(
            out,
            "v {:.12e} {:.12e} {:.12e}",
            v.ball[0], v.ball[1], v.ball[2]
        )?;
    }
    for v in vertices {
        let n = ball_normal(&v.normal);
        writeln!(out, "vn {:.12e} {:.12e} {:.12e}", n[0], n[1], n[2])?;
    }
    for t in tris {
        writeln!(
            out,
            "f {}//{} {}//{} {}//{}",
            t[0] + 1,
            t[0] + 1,
            t[1] + 1,
            t[1] + 1,
            t[2] + 1,
            t[2] + 1
        )?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> anyhow::Result<()> {
    let mut out = String::new();
    writeln!(out, "{header}")?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}
