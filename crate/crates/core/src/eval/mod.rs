//! Game annotation, per-game metrics, confidence intervals, paired tests,
//! the alpha sweep and report files.

mod harness;
mod metrics;
mod report;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

use crate::learning::LearningError;

pub use harness::{
    aggregate, alpha_sweep, compare, metrics_rows, standard_methods, GameRow, Harness, HarnessSettings, MethodReport,
    MethodSpec, PairedComparison, RiskChoice, StrategyParams, SweepRow, SweepTable,
};
pub use metrics::{annotate_game, game_metrics, median, record_metrics, GameMetrics, Metric, MoveAnnotation, GOOD_MOVE_THRESHOLD_CP};
pub use report::{
    emit_report, fig2_plotdata, fig3_plotdata, per_game_csv, summary_csv, MetricsReport, ReportFormat, PER_GAME_CSV_HEADER,
    SUMMARY_CSV_HEADER,
};
pub use stats::{mean_ci, paired_t_test, ranks, spearman, t_critical, MetricSummary};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("eval::annotate_game: game {game} ply {ply} lacks a {what}")]
    MissingAnnotation { game: usize, ply: usize, what: &'static str },
    #[error("eval::game_metrics: game {0} has no agent moves")]
    NoAgentMoves(usize),
    #[error("eval::aggregate: a confidence interval needs at least 2 games, got {0}")]
    TooFewGames(usize),
    #[error("eval::paired_t_test: series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("eval::emit_report: refusing to write an empty report")]
    EmptyReport,
    #[error("eval::emit_report: cannot write {0}: {1}")]
    Write(PathBuf, std::io::Error),
    #[error("eval::run_method: {0}")]
    Config(String),
    #[error(transparent)]
    Learning(#[from] LearningError),
}
