use std::io::{BufRead, Write};
use std::path::Path;

use super::fmt_f64;
use crate::error::{Error, Result};
use crate::eval::{ConditionRow, MetricReport};
use crate::invert::{InverseResult, Method};

/// Columns of the per-condition metrics table.
pub const CONDITION_COLUMNS: [&str; 10] = [
    "condition_id",
    "method",
    "target_ld",
    "rmse",
    "mae",
    "best_abs_error",
    "mpd",
    "min_dist",
    "best_mre",
    "match_fraction",
];

/// Columns of the method summary table, one row per method in the order
/// cdm, opt, hybrid.
pub const SUMMARY_COLUMNS: [&str; 15] = [
    "method",
    "r2",
    "r2_best_of_k",
    "rmse_mean",
    "rmse_std",
    "mae_mean",
    "mae_std",
    "mpd_mean",
    "mpd_std",
    "mindist_mean",
    "mindist_std",
    "sample_match_fraction",
    "condition_hit_fraction",
    "runtime_mean_s",
    "conditions",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

/// One JSON object per line, one line per condition.
pub fn write_results(path: &Path, results: &[InverseResult]) -> Result<()> {
    let mut w = create(path)?;
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<InverseResult>> {
    let f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::State(format!(
            "results file {} not found; run the invert command first",
            path.display()
        )),
        _ => Error::io(path, e),
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

/// Flat candidate table for plotting.
pub fn write_candidates_csv(path: &Path, results: &[InverseResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?);
    let mut header = vec!["condition_id", "method", "candidate"];
    header.extend(&super::CASE_COLUMNS[1..10]);
    header.extend(["predicted_ld", "target_ld", "is_best"]);
    w.write_record(&header)?;
    for r in results {
        for (i, p) in r.candidates.iter().enumerate() {
            let mut row = vec![r.condition_id.to_string(), r.method.to_string(), i.to_string()];
            row.extend(p.to_array().iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(r.predicted_ld[i]));
            row.push(fmt_f64(r.target_ld));
            row.push((i == r.best).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_condition_rows(path: &Path, rows: &[ConditionRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?);
    w.write_record(CONDITION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.condition_id.to_string(),
            r.method.to_string(),
            fmt_f64(r.target_ld),
            fmt_f64(r.rmse),
            fmt_f64(r.mae),
            fmt_f64(r.best_abs_error),
            fmt_f64(r.mpd),
            fmt_f64(r.min_dist),
            opt(r.best_mre),
            opt(r.match_fraction),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Method-by-metric summary. `runtimes` holds the mean seconds per condition
/// of each method; methods are written in the fixed order cdm, opt, hybrid.
pub fn write_summary_csv(path: &Path, reports: &[MetricReport], runtimes: &[(Method, f64)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?);
    w.write_record(SUMMARY_COLUMNS)?;
    for m in Method::ALL {
        let Some(r) = reports.iter().find(|r| r.method == m) else {
            continue;
        };
        let rt = runtimes.iter().find(|(k, _)| *k == m).map(|(_, t)| *t);
        w.write_record([
            m.to_string(),
            opt(r.r2_global),
            opt(r.r2_best_of_k),
            fmt_f64(r.rmse_mean),
            fmt_f64(r.rmse_std),
            fmt_f64(r.mae_mean),
            fmt_f64(r.mae_std),
            fmt_f64(r.mpd_mean),
            fmt_f64(r.mpd_std),
            fmt_f64(r.mindist_mean),
            fmt_f64(r.mindist_std),
            opt(r.recovery.map(|x| x.sample_fraction)),
            opt(r.recovery.map(|x| x.condition_fraction)),
            opt(rt),
            r.conditions.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
