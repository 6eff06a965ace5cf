use serde::{Deserialize, Serialize};

use super::metrics::{record_metrics, GameMetrics, Metric};
use super::stats::{mean_ci, paired_t_test, spearman, MetricSummary};
use super::EvalError;
use crate::learning::{check_complete, run_games, GameRecord, GameSetup, OracleFactory, RiskSource};
use crate::models::{BlunderModel, PolicyModel};
use crate::oracle::OracleLimits;
use crate::selection::Strategy;

/// Where a risk-aware strategy gets its risk from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskChoice {
    /// The trained blunder model.
    #[default]
    Model,
    /// The oracle's own blunder verdict on each candidate move.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub strategy: Strategy,
    /// Play with the policy retrained by aggregation rounds.
    #[serde(default)]
    pub retrained: bool,
    #[serde(default)]
    pub risk: RiskChoice,
}

impl MethodSpec {
    pub fn new(strategy: Strategy) -> MethodSpec {
        MethodSpec { name: strategy.to_string(), strategy, retrained: false, risk: RiskChoice::Model }
    }

    pub fn retrained(strategy: Strategy) -> MethodSpec {
        MethodSpec { name: format!("safedagger+{strategy}"), retrained: true, ..MethodSpec::new(strategy) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub k: usize,
    pub tau: f64,
    pub bits: f64,
    pub pruning_threshold: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            k: 5,
            tau: 1.0,
            bits: 2.0,
            pruning_threshold: crate::selection::DEFAULT_PRUNING_THRESHOLD,
            delta: crate::selection::DEFAULT_DELTA,
            alpha: crate::selection::DEFAULT_ALPHA,
        }
    }
}

/// Baselines, the two retrained-policy baselines and the three shielded
/// strategies. The retrained pair is skipped when `with_retrained` is false.
pub fn standard_methods(p: &StrategyParams, with_retrained: bool) -> Vec<MethodSpec> {
    let mut out: Vec<MethodSpec> = [
        Strategy::Random,
        Strategy::Greedy,
        Strategy::TopK { k: p.k },
        Strategy::Temperature { tau: p.tau },
        Strategy::EntropyFilter { bits: p.bits },
        Strategy::ActionPruning { threshold: p.pruning_threshold },
    ]
    .into_iter()
    .map(MethodSpec::new)
    .collect();
    if with_retrained {
        out.push(MethodSpec::retrained(Strategy::Greedy));
        out.push(MethodSpec::retrained(Strategy::TopK { k: p.k }));
    }
    out.extend(
        [
            Strategy::OgssElimination { delta: p.delta },
            Strategy::OgssUtility { alpha: p.alpha },
            Strategy::OgssTopKShield { k: p.k },
        ]
        .map(MethodSpec::new),
    );
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessSettings {
    pub games: usize,
    pub seed: u64,
    pub max_plies: usize,
    pub opening_plies: usize,
    pub opponent_limits: OracleLimits,
    pub label_limits: OracleLimits,
    /// Search limits for oracle-truth risk.
    pub risk_limits: OracleLimits,
    pub jobs: usize,
}

impl HarnessSettings {
    /// Every method plays the same setups, so games pair by index.
    pub fn setups(&self) -> Vec<GameSetup> {
        (0..self.games)
            .map(|i| GameSetup {
                max_plies: self.max_plies,
                opening_plies: self.opening_plies,
                opponent_limits: self.opponent_limits,
                label_limits: self.label_limits,
                ..GameSetup::new(i, self.seed)
            })
            .collect()
    }
}

pub struct Harness<'a> {
    pub policy: &'a PolicyModel,
    pub retrained: Option<&'a PolicyModel>,
    pub blunder: Option<&'a BlunderModel>,
    pub oracles: &'a OracleFactory<'a>,
    pub settings: HarnessSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub game: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: GameMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// One summary per metric, in [`Metric::ALL`] order.
    pub summaries: Vec<(Metric, MetricSummary)>,
    pub per_game: Vec<GameRow>,
}

impl MethodReport {
    pub fn summary(&self, metric: Metric) -> MetricSummary {
        self.summaries.iter().find(|(m, _)| *m == metric).expect("all metrics summarised").1
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.per_game.iter().map(|r| metric.of(&r.metrics)).collect()
    }
}

/// Summaries of every metric across games.
pub fn aggregate(method: &str, per_game: Vec<GameRow>) -> Result<MethodReport, EvalError> {
    let summaries = Metric::ALL
        .iter()
        .map(|&m| Ok((m, mean_ci(&per_game.iter().map(|r| m.of(&r.metrics)).collect::<Vec<_>>())?)))
        .collect::<Result<_, EvalError>>()?;
    Ok(MethodReport { method: method.to_string(), summaries, per_game })
}

pub fn metrics_rows(records: &[GameRecord]) -> Result<Vec<GameRow>, EvalError> {
    records
        .iter()
        .map(|r| Ok(GameRow { game: r.index, seed: r.seed, metrics: record_metrics(r)? }))
        .collect()
}

impl Harness<'_> {
    pub fn play(&self, spec: &MethodSpec) -> Result<Vec<GameRecord>, EvalError> {
        let policy = if spec.retrained {
            self.retrained.ok_or_else(|| EvalError::Config(format!("{} needs a retrained policy", spec.name)))?
        } else {
            self.policy
        };
        let risk = match (spec.strategy.needs_risk(), spec.risk) {
            (false, _) => RiskSource::None,
            (true, RiskChoice::Oracle) => RiskSource::Oracle(self.settings.risk_limits),
            (true, RiskChoice::Model) => RiskSource::Model(
                self.blunder.ok_or_else(|| EvalError::Config(format!("{} needs a blunder model", spec.name)))?,
            ),
        };
        spec.strategy.validate().map_err(|e| EvalError::Config(format!("{}: {e}", spec.name)))?;
        let records = run_games(policy, &spec.strategy, risk, self.oracles, &self.settings.setups(), self.settings.jobs)?;
        check_complete(&records)?;
        Ok(records)
    }

    pub fn run_method(&self, spec: &MethodSpec) -> Result<(Vec<GameRecord>, MethodReport), EvalError> {
        let records = self.play(spec)?;
        let report = aggregate(&spec.name, metrics_rows(&records)?)?;
        Ok((records, report))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: String,
    pub b: String,
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    pub p_value: f64,
}

/// Paired t-test of one metric between two methods played on the same games.
pub fn compare(a: &MethodReport, b: &MethodReport, metric: Metric) -> Result<PairedComparison, EvalError> {
    let ga: Vec<_> = a.per_game.iter().map(|r| r.seed).collect();
    let gb: Vec<_> = b.per_game.iter().map(|r| r.seed).collect();
    if ga != gb {
        return Err(EvalError::Config(format!("{} and {} were not played on the same seeds", a.method, b.method)));
    }
    Ok(PairedComparison {
        a: a.method.clone(),
        b: b.method.clone(),
        metric,
        mean_a: a.summary(metric).mean,
        mean_b: b.summary(metric).mean,
        p_value: paired_t_test(&a.values(metric), &b.values(metric))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Per-game blunder rate as a percentage.
    pub blunder_pct: MetricSummary,
    pub median_cp_drop: MetricSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Rank correlation of the per-alpha means with alpha; absent when
    /// undefined.
    pub spearman_blunder: Option<f64>,
    pub spearman_median_drop: Option<f64>,
}

/// Runs the utility strategy at each alpha over the same game seeds.
pub fn alpha_sweep(alphas: &[f64], harness: &Harness<'_>, risk: RiskChoice) -> Result<(SweepTable, Vec<MethodReport>), EvalError> {
    if alphas.is_empty() {
        return Err(EvalError::Config("empty alpha grid".into()));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) || alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Config("alphas must be strictly increasing within [0, 1]".into()));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &alpha in alphas {
        let spec = MethodSpec { risk, ..MethodSpec::new(Strategy::OgssUtility { alpha }) };
        let (_, report) = harness.run_method(&spec)?;
        let pct: Vec<f64> = report.values(Metric::BlunderRate).iter().map(|r| 100.0 * r).collect();
        rows.push(SweepRow { alpha, blunder_pct: mean_ci(&pct)?, median_cp_drop: report.summary(Metric::MedianCpDrop) });
        reports.push(report);
    }
    let a: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.blunder_pct.mean).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.median_cp_drop.mean).collect();
    Ok((SweepTable { spearman_blunder: spearman(&a, &b), spearman_median_drop: spearman(&a, &d), rows }, reports))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::models::PolicyArch;
    use crate::oracle::{MaterialOracle, Oracle, OracleError};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn mock() -> Result<Box<dyn Oracle>, OracleError> {
        Ok(Box::new(MaterialOracle::new()))
    }

    pub(crate) fn tiny_policy() -> PolicyModel {
        PolicyModel::new(PolicyArch { conv1: 2, conv2: 2, hidden: 4 }, &mut ChaCha8Rng::seed_from_u64(3))
    }

    pub(crate) fn settings(games: usize) -> HarnessSettings {
        HarnessSettings {
            games,
            seed: 9,
            max_plies: 16,
            opening_plies: 2,
            opponent_limits: OracleLimits::Depth(1),
            label_limits: OracleLimits::Depth(1),
            risk_limits: OracleLimits::Depth(1),
            jobs: 1,
        }
    }

    #[test]
    fn full_exploration_strategies() {
        let policy = tiny_policy();
        let h = Harness { policy: &policy, retrained: None, blunder: None, oracles: &mock, settings: settings(3) };
        for s in [Strategy::Random, Strategy::Temperature { tau: 0.7 }] {
            let (_, rep) = h.run_method(&MethodSpec::new(s)).unwrap();
            assert!(rep.values(Metric::ExplorationRatio).iter().all(|&e| e == 1.0));
            let e = rep.summary(Metric::ExplorationRatio);
            assert_eq!((e.mean, e.half_width), (1.0, 0.0));
        }
    }

    #[test]
    fn missing_models_are_config_errors() {
        let policy = tiny_policy();
        let h = Harness { policy: &policy, retrained: None, blunder: None, oracles: &mock, settings: settings(2) };
        assert!(matches!(h.run_method(&MethodSpec::retrained(Strategy::Greedy)), Err(EvalError::Config(_))));
        assert!(matches!(
            h.run_method(&MethodSpec::new(Strategy::OgssTopKShield { k: 3 })),
            Err(EvalError::Config(_))
        ));
        assert_eq!(standard_methods(&StrategyParams::default(), true).len(), 11);
    }

    #[test]
    fn sweep_single_alpha_and_repeatability() {
        let policy = tiny_policy();
        let h = Harness { policy: &policy, retrained: None, blunder: None, oracles: &mock, settings: settings(2) };
        let (t, _) = alpha_sweep(&[0.5], &h, RiskChoice::Oracle).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!((t.spearman_blunder, t.spearman_median_drop), (None, None));
        let a = alpha_sweep(&[0.0, 1.0], &h, RiskChoice::Oracle).unwrap().0;
        let b = alpha_sweep(&[0.0, 1.0], &h, RiskChoice::Oracle).unwrap().0;
        assert_eq!(a, b);
        assert!(alpha_sweep(&[0.5, 0.25], &h, RiskChoice::Oracle).is_err());
        assert!(alpha_sweep(&[1.5], &h, RiskChoice::Oracle).is_err());
    }
}
