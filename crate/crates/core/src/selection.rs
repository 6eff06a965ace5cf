//! Move selection over a confidence map and an optional blunder-risk
//! function: baselines, risk-threshold elimination, confidence/risk utility,
//! and top-K risk shielding.
//!
//! Every strategy reports how many moves it considered, which feeds the
//! exploration ratio. Ties are always broken by canonical move order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::MoveCode;
use crate::models::ConfidenceMap;

pub const DEFAULT_DELTA: f64 = 0.3;
pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_PRUNING_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    Greedy,
    TopK { k: usize },
    Temperature { tau: f64 },
    /// Keeps moves whose surprisal `-log2 Conf(m)` is at most `bits`.
    EntropyFilter { bits: f64 },
    ActionPruning { threshold: f64 },
    OgssElimination { delta: f64 },
    OgssUtility { alpha: f64 },
    OgssTopKShield { k: usize },
}

impl Strategy {
    pub fn needs_risk(&self) -> bool {
        matches!(
            self,
            Strategy::ActionPruning { .. }
                | Strategy::OgssElimination { .. }
                | Strategy::OgssUtility { .. }
                | Strategy::OgssTopKShield { .. }
        )
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |what: String| Err(SelectionError::Config(what));
        match *self {
            Strategy::TopK { k } | Strategy::OgssTopKShield { k } if k == 0 => bad("K must be at least 1".into()),
            Strategy::Temperature { tau } if !(tau > 0.0 && tau.is_finite()) => bad(format!("temperature {tau} must be > 0")),
            Strategy::EntropyFilter { bits } if !(bits >= 0.0) => bad(format!("surprisal threshold {bits} must be >= 0")),
            Strategy::ActionPruning { threshold } if !(threshold > 0.0 && threshold < 1.0) => {
                bad(format!("pruning threshold {threshold} must lie in (0, 1)"))
            }
            Strategy::OgssElimination { delta } if !(0.0..=1.0).contains(&delta) => bad(format!("delta {delta} must lie in [0, 1]")),
            Strategy::OgssUtility { alpha } if !(0.0..=1.0).contains(&alpha) => bad(format!("alpha {alpha} must lie in [0, 1]")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Strategy::Random => write!(f, "random"),
            Strategy::Greedy => write!(f, "greedy"),
            Strategy::TopK { k } => write!(f, "top-k:{k}"),
            Strategy::Temperature { tau } => write!(f, "temperature:{tau}"),
            Strategy::EntropyFilter { bits } => write!(f, "entropy-filter:{bits}"),
            Strategy::ActionPruning { threshold } => write!(f, "action-pruning:{threshold}"),
            Strategy::OgssElimination { delta } => write!(f, "ogss-elimination:{delta}"),
            Strategy::OgssUtility { alpha } => write!(f, "ogss-utility:{alpha}"),
            Strategy::OgssTopKShield { k } => write!(f, "ogss-topk-shield:{k}"),
        }
    }
}

/// Parses `name` or `name:param`, e.g. `greedy`, `top-k:5`, `ogss-utility:0.6`.
/// Parameters default where a default exists.
impl FromStr for Strategy {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Strategy, SelectionError> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let num = |default: Option<f64>| -> Result<f64, SelectionError> {
            match param {
                Some(p) => p.parse().map_err(|_| SelectionError::Config(format!("bad parameter in strategy {s:?}"))),
                None => default.ok_or_else(|| SelectionError::Config(format!("strategy {name:?} needs a parameter"))),
            }
        };
        let int = |default: Option<usize>| -> Result<usize, SelectionError> {
            match param {
                Some(p) => p.parse().map_err(|_| SelectionError::Config(format!("bad parameter in strategy {s:?}"))),
                None => default.ok_or_else(|| SelectionError::Config(format!("strategy {name:?} needs a parameter"))),
            }
        };
        let no_param = |st: Strategy| match param {
            None => Ok(st),
            Some(_) => Err(SelectionError::Config(format!("strategy {name:?} takes no parameter"))),
        };
        let st = match name {
            "random" => no_param(Strategy::Random)?,
            "greedy" => no_param(Strategy::Greedy)?,
            "top-k" => Strategy::TopK { k: int(Some(5))? },
            "temperature" => Strategy::Temperature { tau: num(None)? },
            "entropy-filter" => Strategy::EntropyFilter { bits: num(None)? },
            "action-pruning" => Strategy::ActionPruning { threshold: num(Some(DEFAULT_PRUNING_THRESHOLD))? },
            "ogss-elimination" => Strategy::OgssElimination { delta: num(Some(DEFAULT_DELTA))? },
            "ogss-utility" => Strategy::OgssUtility { alpha: num(Some(DEFAULT_ALPHA))? },
            "ogss-topk-shield" => Strategy::OgssTopKShield { k: int(Some(5))? },
            _ => return Err(SelectionError::Config(format!("unknown strategy {name:?}"))),
        };
        st.validate()?;
        Ok(st)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveDiagnostic {
    pub mv: MoveCode,
    pub conf: f64,
    /// Present only if the strategy queried this move's risk.
    pub risk: Option<f64>,
    pub utility: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mv: MoveCode,
    pub considered_count: usize,
    pub legal_count: usize,
    pub fallback_used: bool,
    /// One row per legal move, canonical order.
    pub diagnostics: Vec<MoveDiagnostic>,
}

impl SelectionResult {
    pub fn exploration(&self) -> f64 {
        self.considered_count as f64 / self.legal_count as f64
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("strategy configuration: {0}")]
    Config(String),
    #[error("{0} needs a risk function")]
    MissingRisk(Strategy),
    #[error("empty legal-move set")]
    NoMoves,
}

/// Risk lookup that records which moves were queried.
struct Probe<'a> {
    f: &'a mut dyn FnMut(MoveCode) -> f64,
    seen: Vec<Option<f64>>,
    conf: &'a ConfidenceMap,
}

impl<'a> Probe<'a> {
    fn new(conf: &'a ConfidenceMap, f: &'a mut dyn FnMut(MoveCode) -> f64) -> Probe<'a> {
        Probe { f, seen: vec![None; conf.len()], conf }
    }

    fn risk(&mut self, mv: MoveCode) -> f64 {
        let i = index_of(self.conf, mv);
        *self.seen[i].get_or_insert_with(|| (self.f)(mv))
    }
}

fn index_of(conf: &ConfidenceMap, mv: MoveCode) -> usize {
    conf.entries().binary_search_by_key(&mv, |&(m, _)| m).expect("move is in the confidence map")
}

fn diagnostics(conf: &ConfidenceMap, risks: Option<&[Option<f64>]>, utility: Option<&[f64]>) -> Vec<MoveDiagnostic> {
    conf.entries()
        .iter()
        .enumerate()
        .map(|(i, &(mv, c))| MoveDiagnostic {
            mv,
            conf: c,
            risk: risks.and_then(|r| r[i]),
            utility: utility.map(|u| u[i]),
        })
        .collect()
}

fn result(conf: &ConfidenceMap, mv: MoveCode, considered: usize, fallback: bool, diag: Vec<MoveDiagnostic>) -> SelectionResult {
    SelectionResult { mv, considered_count: considered, legal_count: conf.len(), fallback_used: fallback, diagnostics: diag }
}

/// Index drawn with probability proportional to `weights` (not all zero).
fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    // Rounding left a sliver past the end: take the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn greedy_move(conf: &ConfidenceMap) -> MoveCode {
    conf.ranked()[0].0
}

/// The non-OGSS strategies. `risk` is required only by action pruning.
pub fn select_baseline<R: Rng + ?Sized>(
    strategy: &Strategy,
    conf: &ConfidenceMap,
    risk: Option<&mut dyn FnMut(MoveCode) -> f64>,
    rng: &mut R,
) -> Result<SelectionResult, SelectionError> {
    strategy.validate()?;
    if conf.is_empty() {
        return Err(SelectionError::NoMoves);
    }
    let n = conf.len();
    let entries = conf.entries();
    let plain = || diagnostics(conf, None, None);
    Ok(match *strategy {
        Strategy::Random => result(conf, entries[rng.gen_range(0..n)].0, n, false, plain()),
        Strategy::Greedy => result(conf, greedy_move(conf), 1, false, plain()),
        Strategy::TopK { k } => {
            let top: Vec<(MoveCode, f64)> = conf.ranked().into_iter().take(k.min(n)).collect();
            let weights: Vec<f64> = top.iter().map(|e| e.1).collect();
            let i = if weights.iter().sum::<f64>() > 0.0 { sample_weighted(&weights, rng) } else { rng.gen_range(0..top.len()) };
            result(conf, top[i].0, top.len(), false, plain())
        }
        Strategy::Temperature { tau } => {
            // Conf^(1/tau) relative to the maximum, in the log domain.
            let max = entries.iter().map(|e| e.1).fold(0.0, f64::max);
            let weights: Vec<f64> = entries
                .iter()
                .map(|&(_, c)| if c > 0.0 { ((c.ln() - max.ln()) / tau).exp() } else { 0.0 })
                .collect();
            result(conf, entries[sample_weighted(&weights, rng)].0, n, false, plain())
        }
        Strategy::EntropyFilter { bits } => {
            let kept: Vec<MoveCode> = entries.iter().filter(|&&(_, c)| -c.log2() <= bits).map(|e| e.0).collect();
            if kept.is_empty() {
                result(conf, greedy_move(conf), 1, true, plain())
            } else {
                result(conf, kept[rng.gen_range(0..kept.len())], kept.len(), false, plain())
            }
        }
        Strategy::ActionPruning { threshold } => {
            let f = risk.ok_or(SelectionError::MissingRisk(*strategy))?;
            let risks: Vec<Option<f64>> = entries.iter().map(|&(m, _)| Some(f(m))).collect();
            let kept: Vec<MoveCode> =
                entries.iter().zip(&risks).filter(|(_, r)| r.unwrap() <= threshold).map(|(e, _)| e.0).collect();
            let diag = diagnostics(conf, Some(&risks), None);
            if kept.is_empty() {
                result(conf, entries[rng.gen_range(0..n)].0, n, true, diag)
            } else {
                result(conf, kept[rng.gen_range(0..kept.len())], kept.len(), false, diag)
            }
        }
        _ => return Err(SelectionError::Config(format!("{strategy} is not a baseline strategy"))),
    })
}

/// Highest-confidence move with `Risk <= delta`, scanning lazily in
/// confidence order; the top move if none qualifies.
pub fn select_ogss_elimination(
    conf: &ConfidenceMap,
    risk: &mut dyn FnMut(MoveCode) -> f64,
    delta: f64,
) -> Result<SelectionResult, SelectionError> {
    Strategy::OgssElimination { delta }.validate()?;
    if conf.is_empty() {
        return Err(SelectionError::NoMoves);
    }
    let mut probe = Probe::new(conf, risk);
    let ranked = conf.ranked();
    for (scanned, &(mv, _)) in ranked.iter().enumerate() {
        if probe.risk(mv) <= delta {
            let diag = diagnostics(conf, Some(&probe.seen), None);
            return Ok(result(conf, mv, scanned + 1, false, diag));
        }
    }
    let diag = diagnostics(conf, Some(&probe.seen), None);
    Ok(result(conf, ranked[0].0, conf.len(), true, diag))
}

/// `U(m) = alpha * Conf(m) + (1 - alpha) * (1 - Risk(m))`, maximised.
pub fn utility(alpha: f64, conf: f64, risk: f64) -> f64 {
    alpha * conf + (1.0 - alpha) * (1.0 - risk)
}

pub fn select_ogss_utility(
    conf: &ConfidenceMap,
    risk: &mut dyn FnMut(MoveCode) -> f64,
    alpha: f64,
) -> Result<SelectionResult, SelectionError> {
    Strategy::OgssUtility { alpha }.validate()?;
    if conf.is_empty() {
        return Err(SelectionError::NoMoves);
    }
    let risks: Vec<Option<f64>> = conf.entries().iter().map(|&(m, _)| Some(risk(m))).collect();
    let utils: Vec<f64> = conf.entries().iter().zip(&risks).map(|(&(_, c), r)| utility(alpha, c, r.unwrap())).collect();
    // Canonical order is entry order, so the first maximum wins ties.
    let best = (0..utils.len()).fold(0, |b, i| if utils[i] > utils[b] { i } else { b });
    let diag = diagnostics(conf, Some(&risks), Some(&utils));
    Ok(result(conf, conf.entries()[best].0, 1, false, diag))
}

/// Lowest-risk move among the `k` most confident; ties go to higher
/// confidence, then canonical order.
pub fn select_ogss_topk_shield(
    conf: &ConfidenceMap,
    risk: &mut dyn FnMut(MoveCode) -> f64,
    k: usize,
) -> Result<SelectionResult, SelectionError> {
    Strategy::OgssTopKShield { k }.validate()?;
    if conf.is_empty() {
        return Err(SelectionError::NoMoves);
    }
    let mut probe = Probe::new(conf, risk);
    let top: Vec<(MoveCode, f64)> = conf.ranked().into_iter().take(k.min(conf.len())).collect();
    // `top` is already in (confidence desc, canonical) order, so the first
    // strict minimum respects both tie-breaks.
    let mut best = 0;
    let mut best_risk = f64::INFINITY;
    for (i, &(mv, _)) in top.iter().enumerate() {
        let r = probe.risk(mv);
        if r < best_risk {
            best = i;
            best_risk = r;
        }
    }
    let diag = diagnostics(conf, Some(&probe.seen), None);
    Ok(result(conf, top[best].0, top.len(), false, diag))
}

/// Dispatches to the strategy's selector.
pub fn select<R: Rng + ?Sized>(
    strategy: &Strategy,
    conf: &ConfidenceMap,
    risk: Option<&mut dyn FnMut(MoveCode) -> f64>,
    rng: &mut R,
) -> Result<SelectionResult, SelectionError> {
    match *strategy {
        Strategy::OgssElimination { delta } => {
            select_ogss_elimination(conf, risk.ok_or(SelectionError::MissingRisk(*strategy))?, delta)
        }
        Strategy::OgssUtility { alpha } => select_ogss_utility(conf, risk.ok_or(SelectionError::MissingRisk(*strategy))?, alpha),
        Strategy::OgssTopKShield { k } => select_ogss_topk_shield(conf, risk.ok_or(SelectionError::MissingRisk(*strategy))?, k),
        _ => select_baseline(strategy, conf, risk, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moves() -> Vec<MoveCode> {
        ["a2a3", "b2b3", "c2c3", "d2d3", "e2e3"].iter().map(|s| MoveCode::from_uci(s).unwrap()).collect()
    }

    fn conf(values: &[f64]) -> ConfidenceMap {
        ConfidenceMap::from_raw(moves().into_iter().zip(values.iter().copied()).collect())
    }

    fn risk_table(values: &[f64]) -> impl FnMut(MoveCode) -> f64 {
        let table: Vec<(MoveCode, f64)> = moves().into_iter().zip(values.iter().copied()).collect();
        move |m| table.iter().find(|e| e.0 == m).unwrap().1
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn random_considers_everything() {
        let c = conf(&[0.2; 5]);
        let r = select(&Strategy::Random, &c, None, &mut rng()).unwrap();
        assert_eq!((r.considered_count, r.legal_count), (5, 5));
        assert_eq!(r.exploration(), 1.0);
    }

    #[test]
    fn greedy_breaks_ties_canonically() {
        let c = conf(&[0.3, 0.3, 0.1, 0.2, 0.1]);
        let r = select(&Strategy::Greedy, &c, None, &mut rng()).unwrap();
        assert_eq!(r.mv, moves()[0]);
        assert_eq!(r.considered_count, 1);
    }

    #[test]
    fn cold_temperature_is_greedy() {
        let c = ConfidenceMap::from_raw(moves()[..3].iter().copied().zip([0.6, 0.3, 0.1]).collect());
        let mut g = rng();
        for _ in 0..200 {
            let r = select(&Strategy::Temperature { tau: 1e-3 }, &c, None, &mut g).unwrap();
            assert_eq!(r.mv, moves()[0]);
            assert_eq!(r.considered_count, 3);
        }
    }

    #[test]
    fn pruning_keeps_low_risk() {
        let c = ConfidenceMap::from_raw(moves()[..3].iter().copied().zip([0.5, 0.3, 0.2]).collect());
        let mut f = risk_table(&[0.6, 0.4, 0.55, 0.0, 0.0]);
        let r = select(&Strategy::ActionPruning { threshold: 0.5 }, &c, Some(&mut f), &mut rng()).unwrap();
        assert_eq!((r.mv, r.considered_count, r.fallback_used), (moves()[1], 1, false));
        assert_eq!(
            select(&Strategy::ActionPruning { threshold: 0.5 }, &c, None, &mut rng()),
            Err(SelectionError::MissingRisk(Strategy::ActionPruning { threshold: 0.5 }))
        );
        let mut high = risk_table(&[0.9; 5]);
        let r = select(&Strategy::ActionPruning { threshold: 0.5 }, &c, Some(&mut high), &mut rng()).unwrap();
        assert!(r.fallback_used);
        assert_eq!(r.considered_count, 3);
    }

    #[test]
    fn entropy_filter_uses_surprisal() {
        // 2 bits keeps p >= 0.25.
        let c = conf(&[0.4, 0.3, 0.2, 0.05, 0.05]);
        let r = select(&Strategy::EntropyFilter { bits: 2.0 }, &c, None, &mut rng()).unwrap();
        assert_eq!(r.considered_count, 2);
        assert!(r.mv == moves()[0] || r.mv == moves()[1]);
        let flat = conf(&[0.2; 5]);
        let r = select(&Strategy::EntropyFilter { bits: 1.0 }, &flat, None, &mut rng()).unwrap();
        assert!(r.fallback_used);
        assert_eq!((r.mv, r.considered_count), (moves()[0], 1));
    }

    #[test]
    fn elimination_examples() {
        let c = conf(&[0.5, 0.3, 0.1, 0.05, 0.05]);
        let mut f = risk_table(&[0.9, 0.2, 0.1, 0.1, 0.1]);
        let r = select_ogss_elimination(&c, &mut f, 0.3).unwrap();
        assert_eq!((r.mv, r.considered_count, r.fallback_used), (moves()[1], 2, false));
        assert_eq!(r.diagnostics.iter().filter(|d| d.risk.is_some()).count(), 2);

        let mut all_high = risk_table(&[0.9; 5]);
        let r = select_ogss_elimination(&c, &mut all_high, 0.3).unwrap();
        assert_eq!((r.mv, r.considered_count, r.fallback_used), (moves()[0], 5, true));

        let mut first_ok = risk_table(&[0.1; 5]);
        let r = select_ogss_elimination(&c, &mut first_ok, 0.3).unwrap();
        assert_eq!((r.mv, r.considered_count), (moves()[0], 1));
    }

    #[test]
    fn utility_examples() {
        assert!((utility(0.6, 0.8, 0.5) - 0.68).abs() < 1e-12);
        let c = conf(&[0.5, 0.3, 0.1, 0.05, 0.05]);
        let mut f = risk_table(&[0.9, 0.2, 0.05, 0.3, 0.3]);
        assert_eq!(select_ogss_utility(&c, &mut f, 1.0).unwrap().mv, moves()[0]);
        let r = select_ogss_utility(&c, &mut f, 0.0).unwrap();
        assert_eq!((r.mv, r.considered_count), (moves()[2], 1));
        assert!(r.diagnostics.iter().all(|d| d.utility.is_some()));
    }

    #[test]
    fn topk_shield_examples() {
        let c = conf(&[0.4, 0.3, 0.2, 0.05, 0.05]);
        let mut f = risk_table(&[0.4, 0.1, 0.3, 0.0, 0.0]);
        let r = select_ogss_topk_shield(&c, &mut f, 3).unwrap();
        assert_eq!((r.mv, r.considered_count), (moves()[1], 3));
        assert_eq!(r.diagnostics.iter().filter(|d| d.risk.is_some()).count(), 3);
        assert_eq!(select_ogss_topk_shield(&c, &mut f, 1).unwrap().mv, moves()[0]);
        let r = select_ogss_topk_shield(&c, &mut f, 10).unwrap();
        assert_eq!((r.mv, r.considered_count), (moves()[3], 5));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::Random,
            Strategy::Greedy,
            Strategy::TopK { k: 3 },
            Strategy::Temperature { tau: 0.5 },
            Strategy::EntropyFilter { bits: 2.0 },
            Strategy::ActionPruning { threshold: 0.5 },
            Strategy::OgssElimination { delta: 0.3 },
            Strategy::OgssUtility { alpha: 0.6 },
            Strategy::OgssTopKShield { k: 5 },
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("ogss-utility".parse::<Strategy>().unwrap(), Strategy::OgssUtility { alpha: 0.6 });
        assert!("temperature".parse::<Strategy>().is_err());
        assert!("greedy:3".parse::<Strategy>().is_err());
        assert!("top-k:0".parse::<Strategy>().is_err());
        assert!("ogss-utility:1.5".parse::<Strategy>().is_err());
        assert!("bogus".parse::<Strategy>().is_err());
    }
}
