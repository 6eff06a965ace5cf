use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::learning::GameRecord;
use crate::oracle::BLUNDER_THRESHOLD_CP;

/// Drops below this are good moves.
pub const GOOD_MOVE_THRESHOLD_CP: i32 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveAnnotation {
    pub cp_drop: i32,
    pub is_blunder: bool,
    pub is_good: bool,
    pub considered_count: usize,
    pub legal_count: usize,
}

impl MoveAnnotation {
    pub fn new(cp_drop: i32, considered_count: usize, legal_count: usize) -> MoveAnnotation {
        MoveAnnotation {
            cp_drop,
            is_blunder: cp_drop >= BLUNDER_THRESHOLD_CP,
            is_good: cp_drop < GOOD_MOVE_THRESHOLD_CP,
            considered_count,
            legal_count,
        }
    }
}

/// One annotation per agent ply.
pub fn annotate_game(record: &GameRecord) -> Result<Vec<MoveAnnotation>, EvalError> {
    record
        .plies
        .iter()
        .enumerate()
        .filter(|(_, p)| p.by_agent)
        .map(|(ply, p)| {
            let missing = |what| EvalError::MissingAnnotation { game: record.index, ply, what };
            let label = p.label.ok_or_else(|| missing("blunder label"))?;
            let sel = p.selection.as_ref().ok_or_else(|| missing("selection result"))?;
            Ok(MoveAnnotation::new(label.drop, sel.considered_count, sel.legal_count))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameMetrics {
    pub blunder_rate: f64,
    pub good_move_rate: f64,
    pub median_cp_drop: f64,
    pub exploration_ratio: f64,
    pub n_agent_moves: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BlunderRate,
    GoodMoveRate,
    MedianCpDrop,
    ExplorationRatio,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::BlunderRate, Metric::GoodMoveRate, Metric::MedianCpDrop, Metric::ExplorationRatio];

    pub fn name(self) -> &'static str {
        match self {
            Metric::BlunderRate => "blunder_rate",
            Metric::GoodMoveRate => "good_move_rate",
            Metric::MedianCpDrop => "median_cp_drop",
            Metric::ExplorationRatio => "exploration_ratio",
        }
    }

    pub fn of(self, m: &GameMetrics) -> f64 {
        match self {
            Metric::BlunderRate => m.blunder_rate,
            Metric::GoodMoveRate => m.good_move_rate,
            Metric::MedianCpDrop => m.median_cp_drop,
            Metric::ExplorationRatio => m.exploration_ratio,
        }
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[i32]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    }
}

pub fn game_metrics(game: usize, annotations: &[MoveAnnotation]) -> Result<GameMetrics, EvalError> {
    if annotations.is_empty() {
        return Err(EvalError::NoAgentMoves(game));
    }
    let n = annotations.len() as f64;
    let drops: Vec<i32> = annotations.iter().map(|a| a.cp_drop).collect();
    Ok(GameMetrics {
        blunder_rate: annotations.iter().filter(|a| a.is_blunder).count() as f64 / n,
        good_move_rate: annotations.iter().filter(|a| a.is_good).count() as f64 / n,
        median_cp_drop: median(&drops),
        exploration_ratio: annotations.iter().map(|a| a.considered_count as f64 / a.legal_count as f64).sum::<f64>() / n,
        n_agent_moves: annotations.len(),
    })
}

pub fn record_metrics(record: &GameRecord) -> Result<GameMetrics, EvalError> {
    game_metrics(record.index, &annotate_game(record)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert!(MoveAnnotation::new(100, 1, 1).is_blunder);
        assert!(!MoveAnnotation::new(99, 1, 1).is_blunder);
        assert!(!MoveAnnotation::new(50, 1, 1).is_good);
        assert!(MoveAnnotation::new(49, 1, 1).is_good);
        assert!(MoveAnnotation::new(-300, 1, 1).is_good);
    }

    #[test]
    fn worked_game() {
        let a = [MoveAnnotation::new(120, 20, 20), MoveAnnotation::new(30, 30, 30), MoveAnnotation::new(60, 25, 25)];
        let m = game_metrics(0, &a).unwrap();
        assert_eq!(m.blunder_rate, 1.0 / 3.0);
        assert_eq!(m.good_move_rate, 1.0 / 3.0);
        assert_eq!(m.median_cp_drop, 60.0);
        assert_eq!(m.exploration_ratio, 1.0);
        assert_eq!(median(&[4, 1, 3, 2]), 2.5);
        assert!(matches!(game_metrics(7, &[]), Err(EvalError::NoAgentMoves(7))));
    }

    #[test]
    fn missing_label_names_ply() {
        let mut r = crate::learning::dataset::tests::synthetic_record(0, 3, &[1]);
        r.plies[2].label = None;
        let err = annotate_game(&r).unwrap_err().to_string();
        assert!(err.contains("ply 2"), "{err}");
    }
}
