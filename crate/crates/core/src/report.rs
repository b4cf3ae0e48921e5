//! CSV emission for Monte Carlo reports, trajectories and single-epoch
//! estimates. Floats are written with Rust's shortest round-trip decimal
//! formatting, so re-parsing recovers every value exactly.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{BodyRates, MeasurementSet};
use crate::montecarlo::{McReport, CHANNELS};

pub const ERRORS_FILE: &str = "errors.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ELLIPSOID_FILE: &str = "ellipsoid.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub errors: PathBuf,
    pub summary: PathBuf,
    pub ellipsoid: PathBuf,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn push3(row: &mut Vec<String>, v: &Vector3<f64>) {
    row.extend(v.iter().map(|x| x.to_string()));
}

/// Writes `errors.csv`, `summary.csv` and `ellipsoid.csv` into `dir`.
///
/// The summary holds one row per channel plus an `omega_ellipsoid` row whose
/// `predicted_sigma` is the Mahalanobis bound (3) and whose `sample_sigma` is
/// the RMS Mahalanobis distance.
pub fn emit_report(report: &McReport, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let files = ReportFiles {
        errors: dir.join(ERRORS_FILE),
        summary: dir.join(SUMMARY_FILE),
        ellipsoid: dir.join(ELLIPSOID_FILE),
    };

    write_rows(
        &files.errors,
        &["draw", "e_omega_1", "e_omega_2", "e_omega_3", "e_omega_dot_1", "e_omega_dot_2", "e_omega_dot_3"],
        report
            .errors_omega
            .iter()
            .zip(&report.errors_omega_dot)
            .enumerate()
            .map(|(i, (ew, ewd))| {
                let mut row = vec![i.to_string()];
                push3(&mut row, ew);
                push3(&mut row, ewd);
                row
            }),
    )?;

    let predicted = report.predicted_sigma_omega.iter().chain(report.predicted_sigma_omega_dot.iter());
    let sample_w = report.sample_sigma_omega();
    let sample_wd = report.sample_sigma_omega_dot();
    let sample = sample_w.iter().chain(sample_wd.iter());
    let mut summary: Vec<Vec<String>> = CHANNELS
        .iter()
        .zip(predicted.zip(sample))
        .zip(report.containment_3sigma)
        .map(|((name, (p, s)), c)| vec![name.to_string(), p.to_string(), s.to_string(), c.to_string()])
        .collect();
    summary.push(vec![
        "omega_ellipsoid".into(),
        3.0f64.to_string(),
        report.mahalanobis_rms.to_string(),
        report.ellipsoid_containment.to_string(),
    ]);
    write_rows(
        &files.summary,
        &["channel", "predicted_sigma", "sample_sigma", "containment_3sigma"],
        summary,
    )?;

    let mut ellipsoid = Vec::new();
    let p = report.predicted_cov_omega;
    if p.iter().all(|v| v.is_finite()) {
        let eig = SymmetricEigen::new(p);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        for (k, &i) in order.iter().enumerate() {
            let axis = eig.eigenvectors.column(i) * (3.0 * eig.eigenvalues[i].max(0.0).sqrt());
            let mut row = vec!["axis".to_string(), (k + 1).to_string()];
            push3(&mut row, &axis.into_owned());
            ellipsoid.push(row);
        }
    }
    for (i, e) in report.errors_omega.iter().enumerate() {
        let mut row = vec!["error".to_string(), i.to_string()];
        push3(&mut row, e);
        ellipsoid.push(row);
    }
    write_rows(&files.ellipsoid, &["kind", "index", "x", "y", "z"], ellipsoid)?;
    Ok(files)
}

/// Per-draw ω and ω̇ error columns.
pub type ErrorColumns = (Vec<Vector3<f64>>, Vec<Vector3<f64>>);

/// Reads back an `errors.csv` as (ω errors, ω̇ errors).
pub fn read_errors_csv(path: &Path) -> Result<ErrorColumns> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut w = Vec::new();
    let mut wd = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_err(path))?;
        let v = parse_floats(path, &record, 1, 6)?;
        w.push(Vector3::new(v[0], v[1], v[2]));
        wd.push(Vector3::new(v[3], v[4], v[5]));
    }
    Ok((w, wd))
}

fn parse_floats(path: &Path, record: &csv::StringRecord, skip: usize, count: usize) -> Result<Vec<f64>> {
    if record.len() < skip + count {
        return Err(Error::InvalidInput(format!(
            "{}: expected {} columns, found {}",
            path.display(),
            skip + count,
            record.len()
        )));
    }
    record
        .iter()
        .skip(skip)
        .take(count)
        .map(|f| {
            f.trim().parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}: bad number `{f}`: {e}", path.display()))
            })
        })
        .collect()
}

/// Writes a trajectory as `step,t,omega_1..3,omega_dot_1..3`.
pub fn write_trajectory_csv(path: &Path, states: &[BodyRates], dt: f64) -> Result<()> {
    write_rows(
        path,
        &["step", "t", "omega_1", "omega_2", "omega_3", "omega_dot_1", "omega_dot_2", "omega_dot_3"],
        states.iter().enumerate().map(|(k, s)| {
            let mut row = vec![k.to_string(), (k as f64 * dt).to_string()];
            push3(&mut row, &s.omega);
            push3(&mut row, &s.omega_dot);
            row
        }),
    )
}

/// Writes differenced measurements as `sensor,g_x,g_y,g_z` (sensors 1..N).
pub fn write_measurements_csv(path: &Path, measurements: &MeasurementSet) -> Result<()> {
    write_rows(
        path,
        &["sensor", "g_x", "g_y", "g_z"],
        (0..measurements.n_sensors()).map(|i| {
            let mut row = vec![(i + 1).to_string()];
            push3(&mut row, &measurements.sensor(i));
            row
        }),
    )
}

/// Reads `sensor,g_x,g_y,g_z` rows; sensors must appear as 1..N in order.
pub fn read_measurements_csv(path: &Path) -> Result<MeasurementSet> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut sensors = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let id: usize = record.get(0).unwrap_or("").trim().parse().map_err(|_| {
            Error::InvalidInput(format!("{}: row {}: bad sensor number", path.display(), i + 1))
        })?;
        if id != i + 1 {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has sensor {id}, expected {}",
                path.display(),
                i + 1,
                i + 1
            )));
        }
        let v = parse_floats(path, &record, 1, 3)?;
        sensors.push(Vector3::new(v[0], v[1], v[2]));
    }
    MeasurementSet::from_sensors(&sensors)
}
