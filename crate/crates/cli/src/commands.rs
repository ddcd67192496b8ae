//! `spectrum` and `flow`: deterministic artifacts under `output.dir`.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use edflow_core::flow::{run, FlowConfig, FlowScheme, Trajectory};
use edflow_core::pencil::{solve_window, EigenOptions, Pencil};
use edflow_core::torus::snapshot::{read_scalar, write_scalar, write_spinor};
use edflow_core::torus::trig::TrigPolynomial;
use edflow_core::torus::{ExponentTable, ScalarField, TorusGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{InitialData, RunConfig};
use crate::{core_exit_code, error_kind, CliError, EXIT_OK};

/// Result of a subcommand: exit code and the JSON summary also written to disk.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
}

/// Smallest value kept away from zero by random initial data.
const MIN_SAFETY: f64 = 0.5;

pub fn initial_field(config: &RunConfig) -> Result<ScalarField, CliError> {
    let grid = TorusGrid::new(config.n, config.length)?;
    let u = match &config.initial {
        InitialData::Constant(c) => ScalarField::constant(&grid, *c),
        InitialData::Trig(p) => p.sample(&grid),
        InitialData::Random { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            TrigPolynomial::random_positive(*count, 2, 1.0 - MIN_SAFETY, &mut rng).sample(&grid)
        }
        InitialData::File(path) => {
            let mut f = File::open(path)?;
            let u = read_scalar(&mut f, config.length)?;
            if u.grid().n() != config.n {
                return Err(crate::ConfigError::Validation {
                    key: "initial.terms".into(),
                    message: format!("snapshot has N = {}, config has {}", u.grid().n(), config.n),
                }
                .into());
            }
            u
        }
    };
    u.ensure_positive()?;
    Ok(u)
}

fn eigen_options(config: &RunConfig) -> EigenOptions {
    EigenOptions {
        seed: config.seed,
        ..EigenOptions::default()
    }
}

pub fn flow_config(config: &RunConfig) -> FlowConfig {
    FlowConfig {
        dt: config.dt,
        horizon: config.horizon,
        projection_period: config.projection_period,
        gap_tol: config.gap_tol,
        scheme: config.scheme,
        eigen_count: config.eigen_count,
        eigen: eigen_options(config),
        ..FlowConfig::default()
    }
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("summary serializes");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Eigenvalues, residuals and clusters of the pencil near `eigen.target`.
pub fn spectrum(config: &RunConfig) -> Result<Outcome, CliError> {
    let u = initial_field(config)?;
    let exps = ExponentTable::three();
    let pencil = Pencil::new(&u, config.spin, &exps)?;
    fs::create_dir_all(&config.output_dir)?;
    let window = match solve_window(&pencil, config.target, config.eigen_count, &eigen_options(config)) {
        Ok(w) => w,
        Err(e) => {
            let summary = json!({
                "command": "spectrum",
                "status": "failed",
                "error": error_kind(&e),
                "message": e.to_string(),
            });
            write_json(&config.output_dir.join("spectrum.json"), &summary)?;
            return Ok(Outcome {
                code: core_exit_code(&e),
                summary,
            });
        }
    };
    let mut csv = String::from("index,lambda,residual,cluster\n");
    for (i, p) in window.pairs.iter().enumerate() {
        let c = window.clusters.iter().position(|c| c.range().contains(&i)).unwrap_or(usize::MAX);
        writeln!(csv, "{i},{:e},{:e},{c}", p.lambda, p.residual).unwrap();
    }
    fs::write(config.output_dir.join("spectrum.csv"), csv)?;
    let clusters: Vec<Value> = window
        .clusters
        .iter()
        .map(|c| {
            json!({
                "center": c.center,
                "multiplicity": c.len,
                "width": c.width,
                "gap": c.gap(),
                "complete": c.complete,
            })
        })
        .collect();
    let summary = json!({
        "command": "spectrum",
        "status": "ok",
        "config": config.normalized(),
        "target": config.target,
        "radius": window.radius,
        "eigenvalues": window.eigenvalues(),
        "max_residual": window.pairs.iter().map(|p| p.residual).fold(0.0, f64::max),
        "clusters": clusters,
        "outer_iterations": window.outer_iterations,
        "formulas": ["pencil: D psi = lambda u^{p1} psi, p1 = 2/(m-2)"],
    });
    write_json(&config.output_dir.join("spectrum.json"), &summary)?;
    Ok(Outcome { code: EXIT_OK, summary })
}

fn formulas(scheme: FlowScheme) -> Vec<&'static str> {
    let mut f = vec![
        "flow: du/dt = -u^{1-p3} [L u - (E / int u^{p1}|psi|^2) |psi|^2 u^{p2}]",
        "pencil: D psi = lambda u^{p1} psi",
        "eigenvalue derivative: lambda' = -p1 lambda int u^{p1-1} udot |psi|^2",
        "eigenspinor derivative: psi' = (lambda'/2 lambda) psi + p1 lambda R(u^{-1} udot psi)",
        "energy: E = int u L u, L = -c_m Laplacian + scal",
        "volume: int u^{p5}",
    ];
    if scheme == FlowScheme::Imex {
        f.push("imex: backward Euler on c_m u_n^{-p4} Laplacian, remainder explicit");
    }
    f
}

fn write_trajectory(dir: &Path, tr: &Trajectory) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(dir.join("trajectory.csv"))?);
    writeln!(w, "t,lambda,energy,volume,constraint_residual,stationarity_residual,min_u,gap,dt")?;
    for r in &tr.rows {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t, r.lambda, r.energy, r.volume, r.constraint_residual, r.stationarity_residual, r.min_u, r.gap, r.dt
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_snapshots(dir: &Path, tr: &Trajectory) -> Result<Vec<String>, CliError> {
    let snap = dir.join("snapshots");
    fs::create_dir_all(&snap)?;
    let mut names = Vec::new();
    for (step, _, u) in &tr.snapshots {
        let name = format!("u_{step:06}.edf");
        let mut w = BufWriter::new(File::create(snap.join(&name))?);
        write_scalar(&mut w, u)?;
        w.flush()?;
        names.push(name);
    }
    let mut w = BufWriter::new(File::create(snap.join("psi_final.edf"))?);
    write_spinor(&mut w, &tr.last.pair.psi)?;
    w.flush()?;
    names.push("psi_final.edf".into());
    Ok(names)
}

/// Run the coupled flow; a rejected initial state or an aborted run still
/// writes a summary.
pub fn flow(config: &RunConfig) -> Result<Outcome, CliError> {
    let u0 = initial_field(config)?;
    let exps = ExponentTable::three();
    let fc = flow_config(config);
    fs::create_dir_all(&config.output_dir)?;
    let stride = (config.stride > 0).then_some(config.stride);
    let base = json!({
        "command": "flow",
        "config": config.normalized(),
        "formulas": formulas(config.scheme),
    });
    let mut summary = base.as_object().unwrap().clone();
    let tr = match run(&u0, config.spin, config.target, &exps, &fc, stride) {
        Ok(tr) => tr,
        Err(e) => {
            summary.insert("status".into(), json!("rejected"));
            summary.insert("error".into(), json!(error_kind(&e)));
            summary.insert("message".into(), json!(e.to_string()));
            let summary = Value::Object(summary);
            write_json(&config.output_dir.join("summary.json"), &summary)?;
            return Ok(Outcome {
                code: core_exit_code(&e),
                summary,
            });
        }
    };
    write_trajectory(&config.output_dir, &tr)?;
    let snapshots = if stride.is_some() { write_snapshots(&config.output_dir, &tr)? } else { Vec::new() };
    let v0 = tr.rows[0].volume;
    let drift = tr.rows.iter().map(|r| ((r.volume - v0) / v0).abs()).fold(0.0, f64::max);
    let constraint = tr.rows.iter().map(|r| r.constraint_residual).fold(0.0, f64::max);
    let last = tr.rows.last().unwrap();
    let code = tr.abort.as_ref().map_or(EXIT_OK, core_exit_code);
    summary.insert("status".into(), json!(if tr.abort.is_some() { "aborted" } else { "completed" }));
    if let Some(e) = &tr.abort {
        summary.insert("error".into(), json!(error_kind(e)));
        summary.insert("message".into(), json!(e.to_string()));
    }
    summary.insert("steps".into(), json!(tr.rows.len() - 1));
    summary.insert("final".into(), serde_json::to_value(last).expect("row serializes"));
    summary.insert("max_relative_volume_drift".into(), json!(drift));
    summary.insert("max_constraint_residual".into(), json!(constraint));
    summary.insert("snapshots".into(), json!(snapshots));
    let summary = Value::Object(summary);
    write_json(&config.output_dir.join("summary.json"), &summary)?;
    Ok(Outcome { code, summary })
}
