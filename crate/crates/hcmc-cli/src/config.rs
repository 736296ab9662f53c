//! Run configuration: one human-readable TOML document drives every
//! subcommand; all effective values are echoed into the report.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::path::Path;

use hcmc::immersion::GridSpec;
use hcmc::potentials::NnoidConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Geodesic sphere radius parameter; H = coth q. Exactly one of q, h.
    pub q: Option<f64>,
    pub h: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Loop truncation order N.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Circle samples used when reporting residuals.
    #[serde(default = "default_samples")]
    pub circle_samples: usize,
    /// Weight parameter (weight = 2 pi t).
    pub t: Option<f64>,
    /// Delaunay branch: "spherical" or "catenoidal".
    pub branch: Option<String>,
    pub grid: Option<GridConfig>,
    pub nnoid: Option<NnoidSection>,
    pub minoid: Option<MinoidSection>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_rho() -> f64 {
    2.0
}
fn default_order() -> usize {
    16
}
fn default_samples() -> usize {
    64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kind: String,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub x1: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default)]
    pub y1: f64,
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub u1: f64,
    pub nu: usize,
    pub nv: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnoidSection {
    pub directions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinoidSection {
    /// Coefficients of the numerator polynomial A(z) = sum a_j z^{j-1},
    /// as (re, im) pairs.
    pub numerator: Vec<[f64; 2]>,
    pub denominator: Vec<[f64; 2]>,
    pub poles: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_solver_tol")]
    pub solver: f64,
    #[serde(default = "default_ode_tol")]
    pub ode: f64,
}

fn default_solver_tol() -> f64 {
    1e-10
}
fn default_ode_tol() -> f64 {
    1e-12
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: default_solver_tol(),
            ode: default_ode_tol(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            q: Some(0.5),
            h: None,
            rho: default_rho(),
            order: default_order(),
            circle_samples: default_samples(),
            t: None,
            branch: None,
            grid: None,
            nnoid: None,
            minoid: None,
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn q(&self) -> anyhow::Result<f64> {
        let q = match (self.q, self.h) {
            (Some(q), None) => q,
            (None, Some(h)) => {
                if h <= 1.0 {
                    bail!("mean curvature must satisfy H > 1, got {h}");
                }
                (1.0f64 / h).atanh()
            }
            (Some(_), Some(_)) => bail!("give q or h, not both"),
            (None, None) => bail!("config needs q or h"),
        };
        if q <= 0.0 {
            bail!("q must be positive, got {q}");
        }
        if self.rho <= q.exp() {
            bail!(
                "rho = {} must exceed e^q = {:.6}",
                self.rho,
                q.exp()
            );
        }
        if self.tolerances.solver <= 0.0 || self.tolerances.ode <= 0.0 {
            bail!("tolerances must be positive");
        }
        Ok(q)
    }

    pub fn grid_spec(&self, default: GridSpec) -> anyhow::Result<GridSpec> {
        let Some(g) = &self.grid else {
            return Ok(default);
        };
        match g.kind.as_str() {
            "rect" => Ok(GridSpec::Rect {
                x0: g.x0,
                x1: g.x1,
                y0: g.y0,
                y1: g.y1,
                nu: g.nu,
                nv: g.nv,
            }),
            "log_polar" => Ok(GridSpec::LogPolar {
                center: (0.0, 0.0),
                u0: g.u0,
                u1: g.u1,
                nu: g.nu,
                ntheta: g.nv,
            }),
            other => bail!("unknown grid kind {other:?}"),
        }
    }

    pub fn nnoid_config(&self) -> anyhow::Result<NnoidConfig> {
        let q = self.q()?;
        let Some(sec) = &self.nnoid else {
            // default: the symmetric 3-noid
            return Ok(NnoidConfig::symmetric(3, q));
        };
        Ok(NnoidConfig {
            q,
            directions: sec.directions.clone(),
            weights: sec.weights.clone(),
        })
    }
}

/// Parse a `--grid` flag of the form "rect:x0,x1,y0,y1,nu,nv" or
/// "log_polar:u0,u1,nu,ntheta".
pub fn parse_grid_flag(s: &str) -> anyhow::Result<GridConfig> {
    let (kind, rest) = s
        .split_once(':')
        .with_context(|| format!("grid flag {s:?} needs kind:params"))?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("parsing grid numbers")?;
    match kind {
        "rect" => {
            if nums.len() != 6 {
                bail!("rect grid needs 6 numbers");
            }
            Ok(GridConfig {
                kind: "rect".into(),
                x0: nums[0],
                x1: nums[1],
                y0: nums[2],
                y1: nums[3],
                u0: 0.0,
                u1: 0.0,
                nu: nums[4] as usize,
                nv: nums[5] as usize,
            })
        }
        "log_polar" => {
            if nums.len() != 4 {
                bail!("log_polar grid needs 4 numbers");
            }
            Ok(GridConfig {
                kind: "log_polar".into(),
                x0: 0.0,
                x1: 0.0,
                y0: 0.0,
                y1: 0.0,
                u0: nums[0],
                u1: nums[1],
                nu: nums[2] as usize,
                nv: nums[3] as usize,
            })
        }
        other => bail!("unknown grid kind {other:?}"),
    }
}
