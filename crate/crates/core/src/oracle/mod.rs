//! Position evaluation by an external oracle: a UCI engine subprocess or the
//! hermetic material evaluator, plus blunder labelling on top of either.
//!
//! Scores are always reported from the perspective of the side to move in the
//! evaluated position. Mate scores are folded into the centipawn scale as
//! `sign(k) * (10000 - |k|)` so drops stay finite and order by mate distance.

mod mock;
mod uci;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{Board, MoveCode};

pub use mock::MaterialOracle;
pub use uci::{parse_bestmove, parse_info_score, UciEngine, UciOptions};

/// Moves losing at least this many centipawns for the mover are blunders.
pub const BLUNDER_THRESHOLD_CP: i32 = 100;
pub const MATE_SCORE: i32 = 10_000;

/// The default hermetic oracle: plain material after one ply.
pub fn mock_oracle() -> MaterialOracle {
    MaterialOracle::new()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CentipawnScore {
    pub value: i32,
    pub is_mate_mapped: bool,
}

impl CentipawnScore {
    pub fn cp(value: i32) -> CentipawnScore {
        CentipawnScore { value: value.clamp(-MATE_SCORE, MATE_SCORE), is_mate_mapped: false }
    }

    /// Mate in `moves` for the side to move (negative: side to move is mated).
    /// `mate 0` means the side to move is already mated.
    pub fn mate(moves: i32) -> CentipawnScore {
        let value = if moves > 0 {
            MATE_SCORE - moves.min(MATE_SCORE)
        } else {
            -(MATE_SCORE - moves.unsigned_abs().min(MATE_SCORE as u32) as i32)
        };
        CentipawnScore { value, is_mate_mapped: true }
    }

    pub fn negated(self) -> CentipawnScore {
        CentipawnScore { value: -self.value, is_mate_mapped: self.is_mate_mapped }
    }
}

impl fmt::Display for CentipawnScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_mate_mapped {
            write!(f, "{} (mate)", self.value)
        } else {
            write!(f, "{}", self.value)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleLimits {
    Depth(u32),
    MoveTime(u64),
}

impl OracleLimits {
    pub const LABEL_DEFAULT: OracleLimits = OracleLimits::Depth(8);
    pub const OPPONENT_DEFAULT: OracleLimits = OracleLimits::Depth(6);

    pub fn validate(&self) -> Result<(), OracleError> {
        match *self {
            OracleLimits::Depth(d) if d >= 1 => Ok(()),
            OracleLimits::MoveTime(ms) if ms >= 10 => Ok(()),
            other => Err(OracleError::InvalidLimits(format!("{other:?}"))),
        }
    }

    pub fn go_command(&self) -> String {
        match self {
            OracleLimits::Depth(d) => format!("go depth {d}"),
            OracleLimits::MoveTime(ms) => format!("go movetime {ms}"),
        }
    }
}

impl fmt::Display for OracleLimits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleLimits::Depth(d) => write!(f, "depth {d}"),
            OracleLimits::MoveTime(ms) => write!(f, "movetime {ms}ms"),
        }
    }
}

/// Result of one search: the score of the position and the preferred move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Analysis {
    pub score: CentipawnScore,
    pub best: Option<MoveCode>,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("failed to spawn engine {path:?}: {source}")]
    Spawn {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("engine did not answer {expected:?} within {waited_ms} ms")]
    Timeout { expected: &'static str, waited_ms: u64 },
    #[error("engine exited or closed its output")]
    Closed,
    #[error("engine I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no legal move in position {0}; best move is undefined")]
    Terminal(String),
    #[error("engine proposed {mv:?}, which is not legal in {fen}")]
    IllegalBestMove { mv: String, fen: String },
    #[error("invalid search limits {0}")]
    InvalidLimits(String),
}

impl OracleError {
    /// Errors after which the engine session is in an unknown state.
    pub fn is_session_failure(&self) -> bool {
        matches!(self, OracleError::Timeout { .. } | OracleError::Closed | OracleError::Io(_) | OracleError::Protocol(_))
    }
}

/// A position evaluator. One handle serves one game at a time.
pub trait Oracle: Send {
    /// Searches a position that has at least one legal move.
    fn analyse(&mut self, board: &Board, limits: &OracleLimits) -> Result<Analysis, OracleError>;

    fn new_game(&mut self) -> Result<(), OracleError> {
        Ok(())
    }

    /// Engine identity string recorded in run manifests.
    fn identity(&self) -> String;
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn analyse(&mut self, board: &Board, limits: &OracleLimits) -> Result<Analysis, OracleError> {
        (**self).analyse(board, limits)
    }

    fn new_game(&mut self) -> Result<(), OracleError> {
        (**self).new_game()
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

fn terminal_score(board: &Board) -> Option<CentipawnScore> {
    if board.has_legal_moves() {
        None
    } else if board.in_check() {
        Some(CentipawnScore::mate(0))
    } else {
        Some(CentipawnScore::cp(0))
    }
}

/// Side-to-move score; checkmate is -10000 and stalemate 0 without a search.
pub fn evaluate(oracle: &mut dyn Oracle, board: &Board, limits: &OracleLimits) -> Result<CentipawnScore, OracleError> {
    limits.validate()?;
    if let Some(score) = terminal_score(board) {
        return Ok(score);
    }
    Ok(oracle.analyse(board, limits)?.score)
}

pub fn best_move(oracle: &mut dyn Oracle, board: &Board, limits: &OracleLimits) -> Result<MoveCode, OracleError> {
    limits.validate()?;
    if !board.has_legal_moves() {
        return Err(OracleError::Terminal(board.to_fen()));
    }
    let analysis = oracle.analyse(board, limits)?;
    checked_best(board, analysis.best)
}

fn checked_best(board: &Board, best: Option<MoveCode>) -> Result<MoveCode, OracleError> {
    match best {
        Some(mv) if board.is_legal(mv) => Ok(mv),
        Some(mv) => Err(OracleError::IllegalBestMove { mv: mv.to_string(), fen: board.to_fen() }),
        None => Err(OracleError::Terminal(board.to_fen())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlunderLabel {
    /// Mover's perspective, before the move.
    pub eval_before: CentipawnScore,
    /// Mover's perspective, after the move.
    pub eval_after: CentipawnScore,
    pub drop: i32,
    pub is_blunder: bool,
    /// Oracle's preferred move in the pre-move position.
    pub correction: Option<MoveCode>,
}

impl BlunderLabel {
    pub fn from_scores(eval_before: CentipawnScore, eval_after: CentipawnScore, correction: Option<MoveCode>) -> BlunderLabel {
        let drop = eval_before.value - eval_after.value;
        BlunderLabel { eval_before, eval_after, drop, is_blunder: drop >= BLUNDER_THRESHOLD_CP, correction }
    }
}

/// Labels `mv` in `board`. The post-move score is reported by the oracle for
/// the opponent, so it is negated back into the mover's frame.
pub fn label_move(
    oracle: &mut dyn Oracle,
    board: &Board,
    mv: MoveCode,
    limits: &OracleLimits,
) -> Result<BlunderLabel, OracleError> {
    limits.validate()?;
    let next = board
        .apply_move(mv)
        .map_err(|e| OracleError::Protocol(format!("label_move called with {e}")))?;
    let before = oracle.analyse(board, limits)?;
    let correction = checked_best(board, before.best)?;
    let after = evaluate(oracle, &next, limits)?.negated();
    Ok(BlunderLabel::from_scores(before.score, after, Some(correction)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mate_mapping() {
        assert_eq!(CentipawnScore::mate(3).value, 9997);
        assert_eq!(CentipawnScore::mate(-2).value, -9998);
        assert_eq!(CentipawnScore::mate(0).value, -10000);
        assert_eq!(CentipawnScore::cp(25_000).value, 10_000);
    }

    #[test]
    fn threshold_rule() {
        let s = CentipawnScore::cp;
        let l = BlunderLabel::from_scores(s(150), s(30), None);
        assert_eq!((l.drop, l.is_blunder), (120, true));
        let l = BlunderLabel::from_scores(s(150), s(51), None);
        assert_eq!((l.drop, l.is_blunder), (99, false));
        let l = BlunderLabel::from_scores(s(150), s(50), None);
        assert_eq!((l.drop, l.is_blunder), (100, true));
    }

    #[test]
    fn limits_validation() {
        assert!(OracleLimits::Depth(0).validate().is_err());
        assert!(OracleLimits::MoveTime(9).validate().is_err());
        assert!(OracleLimits::MoveTime(10).validate().is_ok());
        assert_eq!(OracleLimits::Depth(8).go_command(), "go depth 8");
        assert_eq!(OracleLimits::MoveTime(50).go_command(), "go movetime 50");
    }
}
