use std::io::Write;
use std::path::Path;

use histwalk_core::experiments::SweepReport;
use histwalk_core::ratefn::RatePoint;
use histwalk_core::simulator::Checkpoint;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("reports serialize");
    out.push(b'\n');
    out
}

/// JSON to `path` if given, otherwise to stdout.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let bytes = json(value);
    match path {
        Some(p) => write_atomic(p, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn emit_bytes(bytes: &[u8], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

pub fn sweep_csv(report: &SweepReport) -> Vec<u8> {
    csv_bytes(
        &["N", "est_speed", "stderr", "predicted_speed", "gap"],
        report.rows.iter().map(|r| {
            vec![
                r.window.to_string(),
                r.est_speed.to_string(),
                r.stderr.to_string(),
                r.predicted_speed.to_string(),
                r.gap.to_string(),
            ]
        }),
    )
}

pub fn ratefn_csv(points: &[RatePoint]) -> Vec<u8> {
    csv_bytes(
        &["r", "I_of_r", "lambda_star"],
        points.iter().map(|p| {
            vec![
                p.r.to_string(),
                p.value.to_string(),
                p.lambda_star.to_string(),
            ]
        }),
    )
}

pub fn trace_csv(checkpoints: &[Checkpoint]) -> Vec<u8> {
    csv_bytes(
        &["n", "X_n", "regime", "window_avg"],
        checkpoints.iter().map(|c| {
            vec![
                c.n.to_string(),
                c.position.to_string(),
                c.regime.to_string(),
                c.window_avg.to_string(),
            ]
        }),
    )
}
