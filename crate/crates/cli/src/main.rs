//! `ksurf`: command-line front end.
//!
//! Exit codes: 0 all enabled assertions pass, 1 an assertion failed,
//! 2 input error, 3 solver failure or infeasible input.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ksurf::export::{read_body_json, write_body_json, write_obj};
use ksurf::pipeline::{construct, record, run_sweep, AssertionOutcome, NRecord, SurfaceDecomposition, SweepFailure};
use ksurf::profile::find_equilibrium_weights;
use ksurf::solver::SolveReport;
use ksurf::sphere::QuadratureGrid;
use ksurf::Error;
use serde::Serialize;

use config::{Mode, Overrides, PointsFile, RunConfig};

const EXIT_ASSERT: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "ksurf", version, about = "Convex bodies with K = 1 boundary and flat discs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Override the icosphere level.
    #[arg(long, global = true)]
    level: Option<u32>,
    /// Override the solver's relative residual tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Override the solver's iteration limit.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Report assertion outcomes without letting them set the exit code.
    #[arg(long, global = true)]
    no_assert: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium weights for a set of points.
    Weights { points: PathBuf },
    /// Solve one body.
    Solve { config: PathBuf },
    /// Solve for every n of the config and compare consecutive bodies.
    Sweep { config: PathBuf },
    /// Convert a body JSON file to OBJ.
    Export { body: PathBuf, out: PathBuf },
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_)
            | Error::Io(_)
            | Error::Resource(_)
            | Error::Domain(_)
            | Error::ClosureViolated { .. }
            | Error::HemisphereViolated { .. } => Failure::Input(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    records: Vec<NRecord>,
    failures: Vec<SweepFailure>,
    assertions: Vec<AssertionOutcome>,
    passed: bool,
    wall_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl<'a> RunReport<'a> {
    fn new(command: &'static str, config: &'a RunConfig) -> Self {
        RunReport {
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            records: Vec::new(),
            failures: Vec::new(),
            assertions: Vec::new(),
            passed: false,
            wall_time: 0.0,
            error: None,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        level: cli.level,
        tol: cli.tol,
        max_iters: cli.max_iters,
    };
    let result = match &cli.command {
        Command::Weights { points } => cmd_weights(points, &cli.out_dir),
        Command::Solve { config } => cmd_run(config, &cli.out_dir, &overrides, false),
        Command::Sweep { config } => cmd_run(config, &cli.out_dir, &overrides, true),
        Command::Export { body, out } => cmd_export(body, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.no_assert => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERT),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Input(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))
}

fn cmd_weights(path: &Path, out_dir: &Path) -> Result<bool, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let file: PointsFile =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let weights = match find_equilibrium_weights(&file.points) {
        Ok(w) => w,
        Err(Error::NoEquilibrium { direction: d }) => {
            eprintln!(
                "infeasible: every point lies in the closed half-space <p, w> >= 0 for w = ({}, {}, {})",
                d[0], d[1], d[2]
            );
            return Err(Failure::Solver("no positive equilibrium weights".into()));
        }
        Err(e) => return Err(e.into()),
    };
    let line: Vec<String> = weights.iter().map(|w| format!("{}", round_display(*w))).collect();
    println!("{}", line.join(" "));
    create_dir(out_dir)?;
    #[derive(Serialize)]
    struct Out<'a> {
        points: &'a [ksurf::sphere::UnitVector],
        weights: &'a [f64],
    }
    write_json(
        &out_dir.join("weights.json"),
        &Out {
            points: &file.points,
            weights: &weights,
        },
    )?;
    Ok(true)
}

/// Prints values within 1e-9 of an integer as that integer.
fn round_display(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x
    }
}

fn cmd_export(body: &Path, out: &Path) -> Result<bool, Failure> {
    let mesh = read_body_json(body)?;
    std::fs::write(out, mesh.to_obj()).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    Ok(true)
}

fn cmd_run(path: &Path, out_dir: &Path, overrides: &Overrides, sweep: bool) -> Result<bool, Failure> {
    let started = Instant::now();
    let mut cfg = RunConfig::load(path).map_err(Failure::Input)?;
    cfg.apply(overrides);
    let construction = cfg.resolve()?;
    if !sweep && construction.n_values.len() != 1 {
        return Err(Failure::Input(format!(
            "solve takes exactly one n, got {:?}; use sweep",
            construction.n_values
        )));
    }
    create_dir(out_dir)?;
    let command = if sweep { "sweep" } else { "solve" };
    let mut report = RunReport::new(command, &cfg);

    let bodies = if sweep {
        match run_sweep(&construction) {
            Ok((r, bodies)) => {
                report.records = r.records;
                report.failures = r.failures;
                report.assertions = r.assertions;
                bodies
            }
            Err(e) => return Err(stub(&mut report, out_dir, started, e)),
        }
    } else {
        let grid = match QuadratureGrid::icosphere(construction.grid_level) {
            Ok(g) => Arc::new(g),
            Err(e) => return Err(stub(&mut report, out_dir, started, e)),
        };
        let n = construction.n_values[0];
        let built = construct(&construction.punctures, n, grid, &construction.solver).and_then(|d| {
            let r = record(&d, construction.probes, construction.probe_step_factor, construction.seed)?;
            Ok((d, r))
        });
        match built {
            Ok((d, r)) => {
                report.assertions = body_assertions(&cfg, &d, &r);
                report.records.push(r);
                vec![d]
            }
            Err(e) => return Err(stub(&mut report, out_dir, started, e)),
        }
    };

    for d in &bodies {
        let stem = body_stem(cfg.mode, d.n);
        if cfg.export.obj {
            write_obj(&d.body, &out_dir.join(format!("{stem}.obj")))?;
        }
        if cfg.export.body_json {
            write_body_json(&d.body, &out_dir.join(format!("{stem}.json")))?;
        }
        if cfg.export.csv {
            write_history(&out_dir.join(format!("{stem}_residuals.csv")), &d.report)?;
        }
    }
    if sweep && cfg.export.csv {
        write_sweep_csv(&out_dir.join("sweep.csv"), &report, construction.punctures.len())?;
    }
    report.passed = report.failures.is_empty() && report.assertions.iter().all(|a| a.passed);
    report.wall_time = started.elapsed().as_secs_f64();
    write_json(&out_dir.join("report.json"), &report)?;
    for a in &report.assertions {
        println!(
            "{} {}{}: measured {:.6e}, bound {:.6e}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.n.map(|n| format!(" (n = {n})")).unwrap_or_default(),
            a.measured,
            a.bound
        );
    }
    for f in &report.failures {
        println!("FAIL solve (n = {}): {}", f.n, f.error);
    }
    Ok(report.passed)
}

/// Writes a report stub naming the error, then classifies it.
fn stub(report: &mut RunReport, out_dir: &Path, started: Instant, e: Error) -> Failure {
    report.error = Some(e.to_string());
    report.wall_time = started.elapsed().as_secs_f64();
    let _ = write_json(&out_dir.join("report.json"), report);
    e.into()
}

fn body_stem(mode: Mode, n: u32) -> String {
    match mode {
        Mode::RoundSphere => "body".into(),
        Mode::Punctures => format!("body_n{n}"),
    }
}

fn body_assertions(cfg: &RunConfig, d: &SurfaceDecomposition, r: &NRecord) -> Vec<AssertionOutcome> {
    let n = Some(d.n);
    let mut out = vec![AssertionOutcome::upper(
        "solver_residual",
        "discrete Minkowski residual within tolerance",
        n,
        r.final_residual,
        cfg.solver.tol_rel,
        true,
    )];
    if cfg.mode == Mode::RoundSphere {
        let dev = d
            .support
            .values()
            .iter()
            .map(|h| (h - 1.0).abs())
            .fold(0.0, f64::max);
        out.push(AssertionOutcome::upper(
            "unit_sphere_deviation",
            "κ ≡ 1 gives the unit sphere",
            None,
            dev,
            0.01,
            true,
        ));
        return out;
    }
    let tol = &cfg.tolerances;
    out.push(AssertionOutcome::upper(
        "total_area_bound",
        "Area(S_n) < 4π + Σ 8π/n² + Σ a_j",
        n,
        r.total_area,
        r.area_bound * (1.0 + tol.area_bound_slack),
        false,
    ));
    let nf = d.n as f64;
    for (j, a) in r.annulus_areas.iter().enumerate() {
        out.push(AssertionOutcome::upper(
            &format!("annulus_area_{j}"),
            "annulus area below 8π/n²",
            n,
            *a,
            8.0 * std::f64::consts::PI / (nf * nf) * (1.0 + tol.annulus_slack),
            false,
        ));
    }
    for (j, m) in r.disc_metrics.iter().enumerate() {
        let angle = m.map(|m| m.normal_angle).unwrap_or(f64::INFINITY);
        out.push(AssertionOutcome::upper(
            &format!("disc_plane_angle_{j}"),
            "disc j is flat with outer normal p_j",
            n,
            angle,
            tol.plane_angle,
            true,
        ));
    }
    out
}

fn csv_err(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn write_history(path: &Path, report: &SolveReport) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["iteration", "residual", "log_merit"]).map_err(csv_err)?;
    for (k, (r, m)) in report.residual_history.iter().zip(&report.merit_history).enumerate() {
        w.write_record([k.to_string(), format!("{r:e}"), format!("{m:e}")])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn write_sweep_csv(path: &Path, report: &RunReport, m: usize) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["n".to_string()];
    header.extend((0..m).map(|j| format!("disc_area_{j}")));
    header.extend(["hausdorff_prev", "total_area", "bound_rhs", "iterations"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    let mut n_values: Vec<u32> = report.config.n_values.clone();
    n_values.sort_unstable();
    for n in n_values {
        let mut row = vec![n.to_string()];
        match report.records.iter().find(|r| r.n == n) {
            Some(r) => {
                row.extend(r.disc_areas.iter().map(|a| format!("{a:e}")));
                row.push(r.hausdorff_prev.map(|h| format!("{h:e}")).unwrap_or_default());
                row.push(format!("{:e}", r.total_area));
                row.push(format!("{:e}", r.area_bound));
                row.push(r.iterations.to_string());
            }
            None => row.extend(std::iter::repeat_n(String::new(), m + 4)),
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}
