use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::harness::{MethodReport, PairedComparison, SweepTable};
use super::metrics::Metric;
use super::EvalError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Hash of the configuration that produced the report.
    pub fingerprint: String,
    pub methods: Vec<MethodReport>,
    pub comparisons: Vec<PairedComparison>,
    pub sweep: Option<SweepTable>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Plotdata,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Plotdata];
}

pub const SUMMARY_CSV_HEADER: &str = "method,metric,mean,ci_lo,ci_hi,n";
pub const PER_GAME_CSV_HEADER: &str =
    "method,game,seed,blunder_rate,good_move_rate,median_cp_drop,exploration_ratio,n_agent_moves";

/// `method,metric,mean,ci_lo,ci_hi,n`, one row per method and metric.
/// Sweep rows appear as method `ogss-utility:<alpha>` with metrics
/// `blunder_pct` and `median_cp_drop`.
pub fn summary_csv(report: &MetricsReport) -> String {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    for m in &report.methods {
        for (metric, s) in &m.summaries {
            writeln!(out, "{},{},{},{},{},{}", m.method, metric.name(), s.mean, s.ci_lo, s.ci_hi, s.n).unwrap();
        }
    }
    if let Some(sweep) = &report.sweep {
        for r in &sweep.rows {
            for (name, s) in [("blunder_pct", &r.blunder_pct), ("median_cp_drop", &r.median_cp_drop)] {
                writeln!(out, "ogss-utility:{},{name},{},{},{},{}", r.alpha, s.mean, s.ci_lo, s.ci_hi, s.n).unwrap();
            }
        }
    }
    out
}

pub fn per_game_csv(report: &MetricsReport) -> String {
    let mut out = format!("{PER_GAME_CSV_HEADER}\n");
    for m in &report.methods {
        for r in &m.per_game {
            let g = &r.metrics;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                m.method, r.game, r.seed, g.blunder_rate, g.good_move_rate, g.median_cp_drop, g.exploration_ratio, g.n_agent_moves
            )
            .unwrap();
        }
    }
    out
}

/// Scatter of mean blunder rate against mean exploration ratio per method.
pub fn fig2_plotdata(report: &MetricsReport) -> String {
    let mut out = String::from("# method exploration_ratio blunder_rate\n");
    for m in &report.methods {
        let e = m.summary(Metric::ExplorationRatio).mean;
        let b = m.summary(Metric::BlunderRate).mean;
        writeln!(out, "{} {e} {b}", m.method).unwrap();
    }
    out
}

pub fn fig3_plotdata(sweep: &SweepTable) -> String {
    let mut out = String::from("# alpha blunder_pct median_cp_drop\n");
    for r in &sweep.rows {
        writeln!(out, "{} {} {}", r.alpha, r.blunder_pct.mean, r.median_cp_drop.mean).unwrap();
    }
    out
}

/// Writes the requested formats into `dir` and returns the files written.
/// Output depends only on the report, so equal reports give equal bytes.
pub fn emit_report(report: &MetricsReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>, EvalError> {
    if report.methods.is_empty() && report.sweep.is_none() {
        return Err(EvalError::EmptyReport);
    }
    fs::create_dir_all(dir).map_err(|e| EvalError::Write(dir.to_path_buf(), e))?;
    let mut files: Vec<(&str, String)> = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Csv => {
                files.push(("report.csv", summary_csv(report)));
                files.push(("per_game.csv", per_game_csv(report)));
            }
            ReportFormat::Json => {
                let text = serde_json::to_string_pretty(report).expect("report serialises");
                files.push(("report.json", text + "\n"));
            }
            ReportFormat::Plotdata => {
                if !report.methods.is_empty() {
                    files.push(("fig2.dat", fig2_plotdata(report)));
                }
                if let Some(s) = &report.sweep {
                    files.push(("fig3.dat", fig3_plotdata(s)));
                }
            }
        }
    }
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| EvalError::Write(path.clone(), e))?;
        written.push(path);
    }
    Ok(written)
}
