//! Command-line front end: generate spheres, Delaunay surfaces, n-noids and
//! minoids in hyperbolic space, export meshes and run the verification suite.
//!
//! Exit codes: 0 success, 1 input error, 2 solver non-convergence,
//! 3 verification failure.

mod config;
mod export;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;

use config::{parse_grid_flag, RunConfig};
use hcmc::immersion::{sample_surface, FrameSource, GridSpec, SurfaceMesh};
use hcmc::iwasawa::IwasawaConfig;
use hcmc::loops::LoopMat;
use hcmc::mat2::Mat2;
use hcmc::potentials::{delaunay_rs, Branch, DelaunayPotential, ParamVector, SpherePotential};
use hcmc::solver::{solve_minoid, solve_nnoid, SolverOptions};
use hcmc::verify::CheckRecord;
use hcmc::Error as CoreError;

#[derive(Parser)]
#[command(name = "hcmc", about = "CMC (H > 1) surfaces in hyperbolic space via loop groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; flags override single values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight parameter t (weight = 2 pi t).
    #[arg(long)]
    t: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Grid override: "rect:x0,x1,y0,y1,nu,nv" or "log_polar:u0,u1,nu,ntheta".
    #[arg(long)]
    grid: Option<String>,
    /// Run the verification checks for this surface as well.
    #[arg(long)]
    verify: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the round sphere through the DPW pipeline.
    Sphere(Common),
    /// Generate a Delaunay surface of weight 2 pi t.
    Delaunay(Common),
    /// Solve and mesh an n-noid with Delaunay ends.
    Nnoid(Common),
    /// Solve a CMC perturbation of a minimal n-noid.
    Minoid(Common),
    /// Tabulate the rotational profile curves and period integrals.
    Profile(Common),
    /// Run the verification suite for the configured surfaces.
    Verify(Common),
}

fn main() -> ExitCode {
    // HCMC_THREADS caps the worker pool; everything else is configuration.
    if let Some(n) = std::env::var("HCMC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = Cli::parse();
    let (common, run) = match &cli.command {
        Command::Sphere(c) => (c, run_sphere as fn(&RunConfig, &Common) -> anyhow::Result<Vec<CheckRecord>>),
        Command::Delaunay(c) => (c, run_delaunay as _),
        Command::Nnoid(c) => (c, run_nnoid as _),
        Command::Minoid(c) => (c, run_minoid as _),
        Command::Profile(c) => (c, run_profile as _),
        Command::Verify(c) => (c, run_verify as _),
    };
    match load_config(common).and_then(|cfg| run(&cfg, common)) {
        Ok(records) => {
            if !records.is_empty() {
                let failed: Vec<&CheckRecord> = records.iter().filter(|r| !r.pass).collect();
                for r in &records {
                    println!(
                        "[{}] {}: measured {:.6e} threshold {:.6e} ({})",
                        if r.pass { "pass" } else { "FAIL" },
                        r.name,
                        r.measured,
                        r.threshold,
                        r.inputs
                    );
                }
                if !failed.is_empty() {
                    eprintln!("{} verification check(s) failed", failed.len());
                    return ExitCode::from(3);
                }
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err
                .downcast_ref::<CoreError>()
                .map(|e| matches!(e, CoreError::NoConvergence(_)))
                .unwrap_or(false)
            {
                2
            } else {
                1
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = common.t {
        cfg.t = Some(t);
    }
    if let Some(g) = &common.grid {
        cfg.grid = Some(parse_grid_flag(g)?);
    }
    cfg.q()?; // validate early
    Ok(cfg)
}

fn ensure_out(common: &Common) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating output directory {}", common.out.display()))?;
    Ok(common.out.clone())
}

fn branch_of(cfg: &RunConfig) -> anyhow::Result<Branch> {
    match cfg.branch.as_deref() {
        None | Some("spherical") => Ok(Branch::Spherical),
        Some("catenoidal") => Ok(Branch::Catenoidal),
        Some(other) => bail!("unknown branch {other:?}"),
    }
}

fn write_effective_config(dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    // every default is made explicit in the echoed document
    let text = toml::to_string_pretty(cfg)?;
    std::fs::write(dir.join("effective_config.toml"), text)?;
    Ok(())
}

// ---------------------------------------------------------------------------

fn run_sphere(cfg: &RunConfig, common: &Common) -> anyhow::Result<Vec<CheckRecord>> {
    let q = cfg.q()?;
    let out = ensure_out(common)?;
    write_effective_config(&out, cfg)?;
    let n = cfg.order;
    let pot = SpherePotential { n };
    let grid = cfg.grid_spec(GridSpec::Rect {
        x0: -1.6,
        x1: 1.6,
        y0: -1.2,
        y1: 1.2,
        nu: 64,
        nv: 32,
    })?;
    let source = FrameSource::Integrated {
        pot: &pot,
        base_z: C64::new(0.0, 0.0),
        base_frame: LoopMat::identity(n),
        tol: cfg.tolerances.ode,
    };
    let mesh = sample_surface(&grid, &source, Some(&pot), q, &IwasawaConfig::for_order(n, cfg.rho))?;
    export::write_obj(&out.join("sphere.obj"), &mesh.vertices, &mesh.tris)?;
    println!(
        "sphere: {} vertices, {} triangles -> {}",
        mesh.vertices.len(),
        mesh.tris.len(),
        out.join("sphere.obj").display()
    );
    if common.verify {
        Ok(sphere_checks(q, &mesh))
    } else {
        Ok(Vec::new())
    }
}

fn sphere_checks(q: f64, mesh: &SurfaceMesh) -> Vec<CheckRecord> {
    let center = hcmc::hyperbolic::axis_sigma3().point(q);
    let worst = mesh
        .vertices
        .iter()
        .map(|v| (hcmc::hyperbolic::dist(&center, &v.point) - q).abs())
        .fold(0.0f64, f64::max);
    vec![CheckRecord::below(
        "sphere_distance_to_center",
        format!("q={q}, {} vertices", mesh.vertices.len()),
        worst,
        1e-8,
    )]
}

fn run_delaunay(cfg: &RunConfig, common: &Common) -> anyhow::Result<Vec<CheckRecord>> {
    let q = cfg.q()?;
    let out = ensure_out(common)?;
    write_effective_config(&out, cfg)?;
    let n = cfg.order;
    let t = cfg.t.unwrap_or(0.02);
    let branch = branch_of(cfg)?;
    let params = delaunay_rs(q, t, branch).map_err(|e| anyhow!(e))?;
    let grid = cfg.grid_spec(GridSpec::LogPolar {
        center: (0.0, 0.0),
        u0: -2.5,
        u1: 2.5,
        nu: 96,
        ntheta: 48,
    })?;
    let a = params.residue(n);
    let direct = move |u: f64, v: f64, _z: C64| -> hcmc::Result<LoopMat> {
        Ok(a.scale(C64::new(u, v)).exp())
    };
    let source = FrameSource::Direct(&direct);
    let pot = DelaunayPotential { params, n };
    let mesh = sample_surface(&grid, &source, Some(&pot), q, &IwasawaConfig::for_order(n, cfg.rho))?;
    export::write_obj(&out.join("delaunay.obj"), &mesh.vertices, &mesh.tris)?;
    println!(
        "delaunay: t={t}, branch={branch:?}, weight={:.6e} -> {}",
        2.0 * std::f64::consts::PI * t,
        out.join("delaunay.obj").display()
    );
    if !common.verify {
        return Ok(Vec::new());
    }
    let mut records = Vec::new();
    if t == 0.0 && branch == Branch::Spherical {
        // the t = 0 spherical family is a round sphere about the dressed center
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let h0 = Mat2::from_real(inv_sqrt2, -q.exp() * inv_sqrt2, (-q).exp() * inv_sqrt2, inv_sqrt2);
        let center = hcmc::hyperbolic::act(&h0, &hcmc::hyperbolic::axis_sigma3().point(q))
            .map_err(|e| anyhow!(e))?;
        let worst = mesh
            .vertices
            .iter()
            .map(|v| (hcmc::hyperbolic::dist(&center, &v.point) - q).abs())
            .fold(0.0f64, f64::max);
        records.push(CheckRecord::below(
            "delaunay_t0_distance_to_center",
            format!("q={q}"),
            worst,
            1e-8,
        ));
    } else {
        records.push(delaunay_curvature_check(&params, n, cfg.rho)?);
        records.push(delaunay_weight_check(&params, n, cfg.rho)?);
    }
    Ok(records)
}

fn delaunay_curvature_check(
    params: &hcmc::potentials::DelaunayParams,
    n: usize,
    rho: f64,
) -> anyhow::Result<CheckRecord> {
    let q = params.q;
    let want = 1.0 / q.tanh();
    let a = params.residue(n);
    let iw = IwasawaConfig::for_order(n, rho);
    let h = 1e-2;
    let mut worst: f64 = 0.0;
    for (u0, th0) in [(0.0, 1.0), (0.8, 2.5), (-0.9, 4.2)] {
        let sampler = |i: i32, j: i32| -> hcmc::Result<hcmc::hyperbolic::HPoint> {
            let frame = a
                .scale(C64::new(u0 + h * i as f64, th0 + h * j as f64))
                .exp();
            let pair = hcmc::iwasawa::iwasawa(&frame, &iw)?;
            hcmc::immersion::sym_point(&pair.f, q)
        };
        let h_est = hcmc::verify::mean_curvature_fd(&sampler, h).map_err(|e| anyhow!(e))?;
        worst = worst.max((h_est - want).abs() / want);
    }
    Ok(CheckRecord::below(
        "delaunay_mean_curvature_rel",
        format!("q={q}, t={}", params.t),
        worst,
        1e-3,
    ))
}

/// Measure the weight through the period relation 2 pi^2 / int(1/g) on the
/// generated meridian and compare with 2 pi t.
fn delaunay_weight_check(
    params: &hcmc::potentials::DelaunayParams,
    n: usize,
    rho: f64,
) -> anyhow::Result<CheckRecord> {
    let measured = hcmc::verify::delaunay_weight_from_meridian(params, n, rho)
        .map_err(|e| anyhow!(e))?;
    let want = 2.0 * std::f64::consts::PI * params.t;
    Ok(CheckRecord::below(
        "delaunay_weight_cross_check",
        format!("t={}", params.t),
        (measured / want - 1.0).abs(),
        1e-3,
    ))
}

fn run_nnoid(cfg: &RunConfig, common: &Common) -> anyhow::Result<Vec<CheckRecord>> {
    let q = cfg.q()?;
    let out = ensure_out(common)?;
    write_effective_config(&out, cfg)?;
    let nnoid_cfg = cfg.nnoid_config()?;
    let t = cfg
        .t
        .ok_or_else(|| anyhow!("the nnoid subcommand needs --t (or t in the config)"))?;
    let opts = SolverOptions {
        order: cfg.order,
        tol: cfg.tolerances.solver,
        ode_tol: cfg.tolerances.ode,
        ..Default::default()
    };
    let (pot, outcome) = solve_nnoid(&nnoid_cfg, t, &opts).map_err(anyhow::Error::new)?;
    let weights: Vec<f64> = (0..nnoid_cfg.n_ends())
        .map(|i| hcmc::solver::nnoid_end_weight(&pot, i))
        .collect::<hcmc::Result<_>>()
        .map_err(|e| anyhow!(e))?;
    #[derive(serde::Serialize)]
    struct NnoidReport {
        q: f64,
        t: f64,
        residual_inf: f64,
        iterations: Vec<f64>,
        condition: f64,
        end_weights: Vec<f64>,
        angle_condition: Vec<((usize, usize), bool)>,
        solved_a0: Vec<[f64; 2]>,
    }
    let report = NnoidReport {
        q,
        t,
        residual_inf: outcome.residual_inf,
        iterations: outcome.iterations.clone(),
        condition: outcome.condition,
        end_weights: weights.clone(),
        angle_condition: nnoid_cfg.angle_condition(),
        solved_a0: pot
            .x
            .a
            .iter()
            .map(|a| {
                let v = a.eval(C64::new(0.0, 0.0));
                [v.re, v.im]
            })
            .collect(),
    };
    export::write_json(&out.join("nnoid_report.json"), &report)?;
    println!(
        "nnoid: solved at t={t} with residual {:.3e}; end weights {:?}",
        outcome.residual_inf, weights
    );
    let (vertices, tris) =
        hcmc::verify::nnoid_global_mesh(&pot, cfg.rho, cfg.tolerances.ode).map_err(|e| anyhow!(e))?;
    export::write_obj(&out.join("nnoid.obj"), &vertices, &tris)?;
    println!(
        "nnoid: {} vertices, {} triangles -> {}",
        vertices.len(),
        tris.len(),
        out.join("nnoid.obj").display()
    );
    if !common.verify {
        return Ok(Vec::new());
    }
    let mut records = Vec::new();
    let radii: Vec<f64> = (0..9)
        .map(|k| 1e-2 * 10f64.powf(k as f64 / 8.0))
        .collect();
    for i in 0..nnoid_cfg.n_ends() {
        let analysis = hcmc::verify::analyze_end(
            &pot,
            i,
            &hcmc::zap::ZapConfig::default(),
            cfg.rho,
            cfg.tolerances.ode,
        )
        .map_err(|e| anyhow!(e))?;
        let fit = hcmc::verify::delaunay_rate_fit(&analysis, &radii).map_err(|e| anyhow!(e))?;
        records.push(CheckRecord {
            name: format!("end{i}_distance_rate_slope"),
            inputs: format!("t={t}"),
            measured: fit.slope,
            threshold: 0.8,
            pass: fit.slope >= 0.8,
        });
        let axis_err = hcmc::verify::axis_check_nnoid(&analysis, nnoid_cfg.directions[i])
            .map_err(|e| anyhow!(e))?;
        records.push(CheckRecord::below(
            &format!("end{i}_axis_angle"),
            format!("t={t}"),
            axis_err,
            0.1,
        ));
        let cert = hcmc::verify::embeddedness_certificate(&analysis, 0.1, (5e-3, 5e-2), 6, 8)
            .map_err(|e| anyhow!(e))?;
        records.push(CheckRecord {
            name: format!("end{i}_normal_graph_certificate"),
            inputs: format!("alpha=0.1, r_t={:.4e}", cert.tubular_radius),
            measured: cert.max_distance,
            threshold: 0.1 * cert.tubular_radius,
            pass: cert.pass,
        });
    }
    let crossings = hcmc::verify::self_intersection_scan(&vertices, &tris);
    records.push(CheckRecord {
        name: "global_self_intersection_scan".into(),
        inputs: format!("{} triangles", tris.len()),
        measured: crossings as f64,
        threshold: 0.5,
        pass: crossings == 0,
    });
    export::write_json(&out.join("verification_report.json"), &records)?;
    Ok(records)
}

fn run_minoid(cfg: &RunConfig, common: &Common) -> anyhow::Result<Vec<CheckRecord>> {
    let q = cfg.q()?;
    let out = ensure_out(common)?;
    write_effective_config(&out, cfg)?;
    let t = cfg
        .t
        .ok_or_else(|| anyhow!("the minoid subcommand needs --t (or t in the config)"))?;
    let central = minoid_central(cfg)?;
    let opts = SolverOptions {
        order: cfg.order,
        tol: cfg.tolerances.solver,
        ode_tol: cfg.tolerances.ode,
        ..Default::default()
    };
    let (pot, outcome) = solve_minoid(q, &central, t, &opts).map_err(anyhow::Error::new)?;
    let weights: Vec<f64> = (0..central.p.len())
        .map(|i| hcmc::solver::minoid_end_weight(&pot, i))
        .collect::<hcmc::Result<_>>()
        .map_err(|e| anyhow!(e))?;
    #[derive(serde::Serialize)]
    struct MinoidReport {
        q: f64,
        t: f64,
        residual_inf: f64,
        iterations: Vec<f64>,
        end_weights: Vec<f64>,
    }
    export::write_json(
        &out.join("minoid_report.json"),
        &MinoidReport {
            q,
            t,
            residual_inf: outcome.residual_inf,
            iterations: outcome.iterations.clone(),
            end_weights: weights.clone(),
        },
    )?;
    println!(
        "minoid: solved at t={t} with residual {:.3e}; end weights {:?}",
        outcome.residual_inf, weights
    );
    // mesh a pole-free compact chart
    let grid = cfg.grid_spec(GridSpec::Rect {
        x0: -0.55,
        x1: 0.55,
        y0: -0.55,
        y1: 0.55,
        nu: 32,
        nv: 32,
    })?;
    let source = FrameSource::Integrated {
        pot: &pot,
        base_z: C64::new(0.0, 0.0),
        base_frame: LoopMat::identity(cfg.order),
        tol: cfg.tolerances.ode,
    };
    // frames of the minoid family start from the lambda-constant frame at 0;
    // for the mesh we use the identity (same surface up to rigid motion)
    let mesh = sample_surface(
        &grid,
        &source,
        Some(&pot),
        q,
        &IwasawaConfig::for_order(cfg.order, cfg.rho),
    )?;
    export::write_obj(&out.join("minoid.obj"), &mesh.vertices, &mesh.tris)?;
    println!(
        "minoid: {} vertices -> {}",
        mesh.vertices.len(),
        out.join("minoid.obj").display()
    );
    Ok(Vec::new())
}

fn minoid_central(cfg: &RunConfig) -> anyhow::Result<ParamVector> {
    use hcmc::loops::LoopScalar;
    let n = cfg.order;
    match &cfg.minoid {
        Some(sec) => {
            let conv = |v: &Vec<[f64; 2]>| -> Vec<LoopScalar> {
                v.iter()
                    .map(|c| LoopScalar::constant(n, C64::new(c[0], c[1])))
                    .collect()
            };
            Ok(ParamVector {
                a: conv(&sec.numerator),
                b: conv(&sec.denominator),
                p: conv(&sec.poles),
            })
        }
        None => {
            // default: the symmetric minimal trinoid g = z^2, omega = dz/(z^3-1)^2
            let roots: Vec<C64> = (0..3)
                .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 3.0))
                .collect();
            Ok(ParamVector {
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
                p: roots.iter().map(|r| LoopScalar::constant(n, *r)).collect(),
            })
        }
    }
}

fn run_profile(cfg: &RunConfig, common: &Common) -> anyhow::Result<Vec<CheckRecord>> {
    let q = cfg.q()?;
    let out = ensure_out(common)?;
    write_effective_config(&out, cfg)?;
    let t = cfg.t.unwrap_or(0.02);
    let w = 2.0 * std::f64::consts::PI * t;
    let profile = hcmc::profile::profile_solve(q, w).map_err(anyhow::Error::new)?;
    let rows: Vec<Vec<f64>> = profile
        .samples
        .iter()
        .map(|(s, sigma, dsigma)| {
            vec![
                *s,
                *sigma,
                *dsigma,
                profile.tau * sigma.exp(),
                (profile.tau * sigma.exp()).asinh(),
            ]
        })
        .collect();
    export::write_csv(
        &out.join("profile.csv"),
        "s,sigma,dsigma,conformal_factor,axis_distance",
        &rows,
    )?;
    println!(
        "profile: q={q}, w={w:.6e}: period {:.8}, int g = {:.10}, int 1/g = {:.6}",
        profile.period, profile.int_g, profile.int_inv_g
    );
    let mut records = Vec::new();
    let first = ((profile.h * profile.h - 1.0).sqrt() * profile.int_g
        - std::f64::consts::PI)
        .abs();
    records.push(CheckRecord::below(
        "profile_first_period_integral",
        format!("q={q}, w={w:.4e}"),
        first,
        1e-6,
    ));
    let want = 2.0 * std::f64::consts::PI * std::f64::consts::PI / w.abs();
    records.push(CheckRecord::below(
        "profile_second_period_integral_rel",
        format!("q={q}, w={w:.4e}"),
        (profile.int_inv_g - want).abs() / want,
        1e-6,
    ));
    if common.verify {
        Ok(records)
    } else {
        for r in &records {
            if !r.pass {
                bail!("{} failed: {:.3e}", r.name, r.measured);
            }
        }
        Ok(Vec::new())
    }
}

fn run_verify(cfg: &RunConfig, common: &Common) -> anyhow::Result<Vec<CheckRecord>> {
    let q = cfg.q()?;
    let out = ensure_out(common)?;
    write_effective_config(&out, cfg)?;
    let mut records = Vec::new();

    // sphere geometry
    {
        let n = cfg.order;
        let pot = SpherePotential { n };
        let grid = GridSpec::Rect {
            x0: -1.2,
            x1: 1.2,
            y0: -0.9,
            y1: 0.9,
            nu: 24,
            nv: 16,
        };
        let source = FrameSource::Integrated {
            pot: &pot,
            base_z: C64::new(0.0, 0.0),
            base_frame: LoopMat::identity(n),
            tol: cfg.tolerances.ode,
        };
        let mesh = sample_surface(&grid, &source, Some(&pot), q, &IwasawaConfig::for_order(n, cfg.rho))?;
        records.extend(sphere_checks(q, &mesh));
    }

    // Delaunay curvature and weight at the configured t
    let t = cfg.t.unwrap_or(0.02);
    for branch in [Branch::Spherical, Branch::Catenoidal] {
        let params = delaunay_rs(q, t, branch).map_err(|e| anyhow!(e))?;
        records.push(delaunay_curvature_check(&params, cfg.order, cfg.rho)?);
        if branch == Branch::Spherical {
            records.push(delaunay_weight_check(&params, cfg.order, cfg.rho)?);
        }
    }

    // profile integrals
    {
        let w = 2.0 * std::f64::consts::PI * t;
        let profile = hcmc::profile::profile_solve(q, w).map_err(anyhow::Error::new)?;
        let first = ((profile.h * profile.h - 1.0).sqrt() * profile.int_g
            - std::f64::consts::PI)
            .abs();
        records.push(CheckRecord::below(
            "profile_first_period_integral",
            format!("q={q}, w={w:.4e}"),
            first,
            1e-6,
        ));
    }

    // n-noid angle condition for the configured family
    let nnoid_cfg = cfg.nnoid_config()?;
    let angles = nnoid_cfg.angle_condition();
    let all = angles.iter().all(|(_, ok)| *ok);
    records.push(CheckRecord {
        name: "nnoid_angle_condition".into(),
        inputs: format!("{} ends", nnoid_cfg.n_ends()),
        measured: angles.iter().filter(|(_, ok)| !*ok).count() as f64,
        threshold: 0.5,
        pass: all,
    });

    export::write_json(&out.join("verification_report.json"), &records)?;
    Ok(records)
}
