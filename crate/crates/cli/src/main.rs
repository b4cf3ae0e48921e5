use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Value};

use gyrofree_core::config::{Config, Overrides};
use gyrofree_core::covariance::covariance_report;
use gyrofree_core::montecarlo::{REFERENCE_DRAWS, REFERENCE_SIGMA_G};
use gyrofree_core::report::{read_measurements_csv, write_trajectory_csv};
use gyrofree_core::{
    build_design_matrix, emit_report, estimate_rates, geometry_kernel, propagate_torque_free, run_monte_carlo,
    validate_geometry, Error, McReport, RateProfile, ReportFiles, Scenario,
};

/// Gyro-free angular rate estimation from accelerometer arrays.
#[derive(Debug, Parser)]
#[command(name = "gyrofree", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true, env = "GYROFREE_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed for noise draws.
    #[arg(long, global = true, env = "GYROFREE_SEED")]
    seed: Option<u64>,
    /// Monte Carlo draw count.
    #[arg(long, global = true, env = "GYROFREE_DRAWS")]
    draws: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "GYROFREE_OUT")]
    out: Option<PathBuf>,
    /// Uniform accelerometer noise, m/s².
    #[arg(long = "sigma-g", global = true, env = "GYROFREE_SIGMA_G")]
    sigma_g: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate ω and ω̇ for one epoch of differenced measurements.
    Estimate {
        /// CSV with columns sensor,g_x,g_y,g_z.
        #[arg(long)]
        measurements: PathBuf,
        /// Sign prior `x,y,z`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3)]
        prior: Option<Vector3<f64>>,
    },
    /// Propagate the configured torque-free trajectory to trajectory.csv.
    Simulate,
    /// Run the configured Monte Carlo campaign.
    Montecarlo,
    /// Validate the configured array and print its covariance analytics.
    Geometry,
    /// Run the reference scenario and check the consistency thresholds.
    PaperRepro,
}

fn parse_vec3(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err(format!("expected 3 comma-separated numbers, got {}", parts.len())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::FAILURE
        }
    }
}

fn error_line(err: &Error) -> Value {
    let mut line = json!({ "error": err.kind(), "message": err.to_string() });
    let inner = match err {
        Error::Draw { draw, source } => {
            line["draw"] = json!(draw);
            source.as_ref()
        }
        other => other,
    };
    match inner {
        Error::Config { key, .. } => line["key"] = json!(key),
        Error::Unobservable { sensors, .. } => line["sensors"] = json!(sensors),
        _ => {}
    }
    line
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        seed: cli.seed,
        draws: cli.draws,
        sigma_g: cli.sigma_g,
        out: cli.out.clone(),
    }
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config { key: "--config".into(), message: "a config file is required".into() })?;
    let mut config = Config::load(path)?;
    config.apply(&overrides(cli));
    Ok(config)
}

fn run(cli: &Cli) -> Result<Value, Error> {
    match &cli.command {
        Command::Estimate { measurements, prior } => estimate(cli, measurements, *prior),
        Command::Simulate => simulate(cli),
        Command::Montecarlo => {
            let config = load_config(cli)?;
            let report = run_monte_carlo(&config.scenario()?)?;
            let files = emit_report(&report, &config.output_dir())?;
            Ok(summary_json(&report, &files))
        }
        Command::Geometry => geometry(cli),
        Command::PaperRepro => reference_repro(cli),
    }
}

fn estimate(cli: &Cli, path: &Path, prior: Option<Vector3<f64>>) -> Result<Value, Error> {
    let config = load_config(cli)?;
    let array = config.sensor_array()?;
    let design = build_design_matrix(&array)?;
    let g = read_measurements_csv(path)?;
    let prior = prior
        .or(config.montecarlo.prior_omega.map(Vector3::from))
        .or(config.rates.as_ref().map(|r| r.omega.into()))
        .unwrap_or_else(Vector3::zeros);
    let est = estimate_rates(&design, &g, &prior)?;
    Ok(json!({
        "omega": vec3(&est.omega),
        "omega_dot": vec3(&est.omega_dot),
        "omega_diagonal": vec3(&est.omega_diagonal),
        "omega_magnitude": est.omega_magnitude,
        "sign_resolved": est.sign_resolved,
        "axis_reliable": est.axis_reliable,
        "p_omega": mat3(&est.p_omega),
        "p_omega_dot": mat3(&est.p_omega_dot),
        "omega_singular": est.omega_singular,
    }))
}

fn simulate(cli: &Cli) -> Result<Value, Error> {
    let config = load_config(cli)?;
    let RateProfile::Trajectory { inertia, initial_omega, dt, n_steps } = config.rate_profile()? else {
        return Err(Error::Config { key: "trajectory".into(), message: "section is required for simulate".into() });
    };
    let states = propagate_torque_free(&inertia, initial_omega, dt, n_steps)?;
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    let path = dir.join("trajectory.csv");
    write_trajectory_csv(&path, &states, dt)?;
    let last = states.last().expect("at least one state");
    Ok(json!({
        "trajectory": path,
        "steps": n_steps,
        "kinetic_energy": [inertia.kinetic_energy(&initial_omega), inertia.kinetic_energy(&last.omega)],
    }))
}

fn geometry(cli: &Cli) -> Result<Value, Error> {
    let config = load_config(cli)?;
    let array = config.sensor_array()?;
    let report = validate_geometry(&array);
    let mut out = json!({
        "valid": report.valid,
        "rank": report.rank,
        "singular_values": report.singular_values.as_slice(),
        "offending_sensors": report.offending,
    });
    if !report.valid {
        build_design_matrix(&array)?;
    }
    if let Ok(kernel) = geometry_kernel(&array) {
        out["triple_product"] = json!(kernel.triple);
        out["k"] = mat3(&kernel.k);
        out["m"] = mat3(&kernel.m);
    }
    let omega = match config.rates.as_ref() {
        Some(r) => Vector3::from(r.omega),
        None => config.trajectory.as_ref().map(|t| t.initial_omega.into()).unwrap_or_else(Vector3::zeros),
    };
    let cov = covariance_report(&array, &omega)?;
    out["p_alpha_diagonal"] = json!(cov.p_alpha.diagonal().as_slice());
    out["omega_dot_variances"] = vec3(&cov.p_omega_dot.diagonal());
    out["omega"] = vec3(&omega);
    out["omega_variances"] = vec3(&cov.p_omega.diagonal());
    out["omega_singular"] = json!(cov.omega_singular);
    out["s"] = json!(cov.s_scalar);
    Ok(out)
}

fn reference_repro(cli: &Cli) -> Result<Value, Error> {
    let scenario = Scenario::reference(
        cli.seed.unwrap_or(42),
        cli.sigma_g.unwrap_or(REFERENCE_SIGMA_G),
        cli.draws.unwrap_or(REFERENCE_DRAWS),
    )?;
    let report = run_monte_carlo(&scenario)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let files = emit_report(&report, &dir)?;
    let failures = report.reproduction_failures();
    if failures.is_empty() {
        Ok(summary_json(&report, &files))
    } else {
        Err(Error::InvalidInput(format!("reproduction thresholds not met: {}", failures.join("; "))))
    }
}

fn summary_json(report: &McReport, files: &ReportFiles) -> Value {
    json!({
        "draws": report.n_draws(),
        "containment_3sigma": report.containment_3sigma,
        "ellipsoid_containment": report.ellipsoid_containment,
        "predicted_sigma_omega": vec3(&report.predicted_sigma_omega),
        "sample_sigma_omega": vec3(&report.sample_sigma_omega()),
        "predicted_sigma_omega_dot": vec3(&report.predicted_sigma_omega_dot),
        "sample_sigma_omega_dot": vec3(&report.sample_sigma_omega_dot()),
        "sign_unresolved": report.sign_unresolved,
        "files": [&files.errors, &files.summary, &files.ellipsoid],
    })
}

fn vec3(v: &Vector3<f64>) -> Value {
    json!([finite_or_null(v[0]), finite_or_null(v[1]), finite_or_null(v[2])])
}

fn mat3(m: &Matrix3<f64>) -> Value {
    Value::Array(m.row_iter().map(|r| vec3(&r.transpose())).collect())
}

/// JSON has no infinity; singular variances become `null`.
fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
