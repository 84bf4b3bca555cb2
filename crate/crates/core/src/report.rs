//! CSV and JSON output of Monte-Carlo results.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::harness::{CellSummary, McSummary, RunRecord};

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "scheme",
    "estimator",
    "alpha",
    "r",
    "rep_count",
    "bias",
    "se_bias",
    "sd",
    "mean_Mm",
    "median_Mm",
    "priv_vs_crc",
    "priv_lower_bound",
    "r_squared_c",
    "dropped_clusters_mean",
    "failed_reps",
];

pub const RAW_COLUMNS: [&str; 14] = [
    "alpha",
    "r",
    "replication",
    "scheme",
    "estimator",
    "tau_hat",
    "error",
    "used_clusters",
    "dropped_clusters",
    "mahalanobis",
    "mahalanobis_used",
    "r_squared_c",
    "mean_degree",
    "mean_cross_degree",
];

/// The experiment knobs echoed on every summary row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunLabel {
    pub alpha: f64,
    /// Reconnection rate of the synthetic network; `None` for fixed networks.
    pub r: Option<f64>,
}

// Shortest round-trip representation; identical across platforms.
fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn count(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per `(scheme, estimator)` cell of every run.
pub fn write_summary_csv<W: Write>(out: W, runs: &[(RunLabel, McSummary)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for (label, summary) in runs {
        for c in &summary.cells {
            w.write_record([
                c.scheme.to_string(),
                c.estimator.to_string(),
                label.alpha.to_string(),
                num(label.r),
                c.rep_count.to_string(),
                num(c.bias),
                num(c.se_bias),
                num(c.sd),
                num(c.mean_mm),
                num(c.median_mm),
                num(c.priv_vs_crc),
                num(c.priv_lower_bound),
                num(c.r_squared_c),
                num(c.dropped_clusters_mean),
                c.failed_reps.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per replication, scheme and estimator of every run.
pub fn write_raw_csv<W: Write>(out: W, runs: &[(RunLabel, Vec<RunRecord>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_COLUMNS)?;
    for (label, records) in runs {
        for r in records {
            w.write_record([
                label.alpha.to_string(),
                num(label.r),
                r.replication.to_string(),
                r.scheme.to_string(),
                r.estimator.to_string(),
                num(r.tau_hat),
                r.error.clone().unwrap_or_default(),
                count(r.used_clusters),
                count(r.dropped_clusters),
                num(r.mahalanobis),
                num(r.mahalanobis_used),
                num(r.r_squared_c),
                r.mean_degree.to_string(),
                r.mean_cross_degree.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    alpha: f64,
    r: Option<f64>,
    tau: f64,
    cells: &'a [CellSummary],
}

/// JSON mirror of the summary CSV; missing statistics are `null`.
pub fn write_summary_json<W: Write>(out: W, runs: &[(RunLabel, McSummary)]) -> Result<()> {
    let entries: Vec<SummaryJson<'_>> = runs
        .iter()
        .map(|(label, s)| SummaryJson {
            alpha: label.alpha,
            r: label.r,
            tau: s.tau,
            cells: &s.cells,
        })
        .collect();
    serde_json::to_writer_pretty(out, &entries)?;
    Ok(())
}
