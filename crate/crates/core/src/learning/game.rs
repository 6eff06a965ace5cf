use std::cell::RefCell;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chess::{encode_board, Board, Color, MoveCode};
use crate::ingest::GameResult;
use crate::models::{move_confidences, policy_forward, BlunderModel, PolicyModel, RiskScorer};
use crate::oracle::{best_move, evaluate, label_move, BlunderLabel, Oracle, OracleError, OracleLimits, BLUNDER_THRESHOLD_CP};
use crate::selection::{select, SelectionResult, Strategy};

pub const DEFAULT_MAX_PLIES: usize = 200;

/// Per-game seed derived from a run seed and the game index.
pub fn game_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5851_F42D_4C95_7F2D
}

/// The agent plays White in odd-indexed games and Black in even ones.
pub fn agent_color(index: usize) -> Color {
    if index % 2 == 1 {
        Color::White
    } else {
        Color::Black
    }
}

/// A start position reached by `plies` uniformly random legal moves from
/// the initial position. Depends only on `seed`, so every strategy sees the
/// same openings. Retries with a fresh draw if the walk ends the game.
pub fn random_opening(seed: u64, plies: usize) -> Board {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0BE4_1A66);
    'attempt: loop {
        let mut board = Board::startpos();
        for _ in 0..plies {
            let legal = board.legal_moves();
            let Some(&mv) = legal.choose(&mut rng) else { continue 'attempt };
            board = board.apply_move(mv).expect("legal move");
        }
        if board.has_legal_moves() {
            return board;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSetup {
    pub index: usize,
    pub seed: u64,
    pub max_plies: usize,
    /// Random plies from the initial position before the game proper.
    pub opening_plies: usize,
    pub opponent_limits: OracleLimits,
    pub label_limits: OracleLimits,
}

impl GameSetup {
    pub fn new(index: usize, run_seed: u64) -> GameSetup {
        GameSetup {
            index,
            seed: game_seed(run_seed, index),
            max_plies: DEFAULT_MAX_PLIES,
            opening_plies: 0,
            opponent_limits: OracleLimits::OPPONENT_DEFAULT,
            label_limits: OracleLimits::LABEL_DEFAULT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    AgentWin,
    AgentLoss,
    Draw { reason: String },
    /// Stopped at the ply limit; `agent_eval` is the labeller's final score
    /// from the agent's side.
    Adjudicated { agent_eval: i32 },
    /// An oracle failed; the record holds every ply completed before it.
    Aborted { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlyRecord {
    /// Position before the move.
    pub fen: String,
    pub mv: MoveCode,
    pub by_agent: bool,
    pub selection: Option<SelectionResult>,
    pub label: Option<BlunderLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub index: usize,
    pub seed: u64,
    pub strategy: String,
    pub agent_color: Color,
    pub start_fen: String,
    pub plies: Vec<PlyRecord>,
    pub outcome: Outcome,
}

impl GameRecord {
    pub fn agent_plies(&self) -> impl Iterator<Item = &PlyRecord> {
        self.plies.iter().filter(|p| p.by_agent)
    }

    /// Replays the moves from the start position, checking that each stored
    /// position matches and each move is legal. Returns the final position.
    pub fn replay(&self) -> Result<Board, String> {
        let mut board = Board::from_fen(&self.start_fen).map_err(|e| format!("start position: {e}"))?;
        for (i, p) in self.plies.iter().enumerate() {
            if board.to_fen() != p.fen {
                return Err(format!("ply {i}: stored position {} differs from replay {}", p.fen, board.to_fen()));
            }
            board = board.apply_move(p.mv).map_err(|e| format!("ply {i}: {e}"))?;
        }
        Ok(board)
    }

    /// PGN result token for export.
    pub fn result(&self) -> GameResult {
        let agent_won = match &self.outcome {
            Outcome::AgentWin => Some(true),
            Outcome::AgentLoss => Some(false),
            _ => None,
        };
        match agent_won {
            Some(won) if (self.agent_color == Color::White) == won => GameResult::WhiteWin,
            Some(_) => GameResult::BlackWin,
            None if matches!(self.outcome, Outcome::Draw { .. }) => GameResult::Draw,
            None => GameResult::Unknown,
        }
    }
}

/// Where the agent's per-move blunder risk comes from.
pub enum Risk<'a> {
    None,
    Model(&'a BlunderModel),
    /// 1.0 for moves the oracle labels as blunders, 0.0 otherwise.
    Oracle { oracle: &'a mut dyn Oracle, limits: OracleLimits },
}

/// Risk of every move in one position under the oracle: the drop of each
/// move against the position's score, thresholded.
struct OracleRisk<'a> {
    oracle: &'a mut dyn Oracle,
    limits: OracleLimits,
    board: &'a Board,
    before: Option<i32>,
    cache: HashMap<MoveCode, f64>,
    error: Option<OracleError>,
}

impl OracleRisk<'_> {
    fn risk(&mut self, mv: MoveCode) -> f64 {
        if let Some(&r) = self.cache.get(&mv) {
            return r;
        }
        if self.error.is_some() {
            return 1.0;
        }
        let result = (|| {
            let before = match self.before {
                Some(b) => b,
                None => {
                    let b = evaluate(self.oracle, self.board, &self.limits)?.value;
                    self.before = Some(b);
                    b
                }
            };
            let child = self.board.apply_move(mv).map_err(|e| OracleError::Protocol(e.to_string()))?;
            let after = -evaluate(self.oracle, &child, &self.limits)?.value;
            Ok::<f64, OracleError>(if before - after >= BLUNDER_THRESHOLD_CP { 1.0 } else { 0.0 })
        })();
        match result {
            Ok(r) => {
                self.cache.insert(mv, r);
                r
            }
            Err(e) => {
                self.error = Some(e);
                1.0
            }
        }
    }
}

/// Chooses the agent's move in `board`.
pub fn agent_move(
    policy: &PolicyModel,
    strategy: &Strategy,
    risk: &mut Risk<'_>,
    board: &Board,
    rng: &mut ChaCha8Rng,
) -> Result<SelectionResult, String> {
    let legal = board.legal_moves();
    let heads = policy_forward(policy, &encode_board(board)).map_err(|e| format!("models::policy_forward: {e}"))?;
    let conf = move_confidences(&heads, &legal);
    let selection = |f: Option<&mut dyn FnMut(MoveCode) -> f64>, rng: &mut ChaCha8Rng| {
        select(strategy, &conf, f, rng).map_err(|e| format!("selection::select: {e}"))
    };
    match risk {
        Risk::None => selection(None, rng),
        Risk::Model(model) => {
            let scorer = RiskScorer::new(model, board);
            selection(Some(&mut |m| scorer.risk(m)), rng)
        }
        Risk::Oracle { oracle, limits } => {
            let state = RefCell::new(OracleRisk {
                oracle: &mut **oracle,
                limits: *limits,
                board,
                before: None,
                cache: HashMap::new(),
                error: None,
            });
            let result = selection(Some(&mut |m| state.borrow_mut().risk(m)), rng)?;
            match state.into_inner().error {
                Some(e) => Err(format!("oracle::evaluate (risk): {e}")),
                None => Ok(result),
            }
        }
    }
}

type RepetitionKey = (Vec<u64>, Color, u8, Option<crate::chess::Square>);

fn draw_reason(board: &Board, seen: &HashMap<RepetitionKey, u32>) -> Option<&'static str> {
    if board.halfmove_clock() >= 100 {
        return Some("fifty-move rule");
    }
    if seen.get(&board.repetition_key()).copied().unwrap_or(0) >= 3 {
        return Some("threefold repetition");
    }
    None
}

/// Plays one game: the agent moves via `strategy`, the opponent replies with
/// the oracle's best move, and every agent move is labelled by `labeler`.
/// An oracle failure ends the game with [`Outcome::Aborted`] and keeps the
/// plies completed so far.
pub fn play_game(
    policy: &PolicyModel,
    strategy: &Strategy,
    risk: &mut Risk<'_>,
    opponent: &mut dyn Oracle,
    labeler: &mut dyn Oracle,
    setup: &GameSetup,
) -> GameRecord {
    let start = random_opening(setup.seed, setup.opening_plies);
    let agent = agent_color(setup.index);
    let mut record = GameRecord {
        index: setup.index,
        seed: setup.seed,
        strategy: strategy.to_string(),
        agent_color: agent,
        start_fen: start.to_fen(),
        plies: Vec::new(),
        outcome: Outcome::Draw { reason: String::new() },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut board = start;
    let mut seen = HashMap::new();
    *seen.entry(board.repetition_key()).or_insert(0) += 1;

    let abort = |record: &mut GameRecord, error: String| {
        record.outcome = Outcome::Aborted { error };
    };
    if let Err(e) = opponent.new_game().and_then(|_| labeler.new_game()) {
        abort(&mut record, format!("oracle::new_game: {e}"));
        return record;
    }
    loop {
        if !board.has_legal_moves() {
            record.outcome = if !board.in_check() {
                Outcome::Draw { reason: "stalemate".into() }
            } else if board.side_to_move() == agent {
                Outcome::AgentLoss
            } else {
                Outcome::AgentWin
            };
            return record;
        }
        if let Some(reason) = draw_reason(&board, &seen) {
            record.outcome = Outcome::Draw { reason: reason.into() };
            return record;
        }
        if record.plies.len() >= setup.max_plies {
            record.outcome = match evaluate(labeler, &board, &setup.label_limits) {
                Ok(s) => Outcome::Adjudicated { agent_eval: if board.side_to_move() == agent { s.value } else { -s.value } },
                Err(e) => Outcome::Aborted { error: format!("oracle::evaluate (adjudication): {e}") },
            };
            return record;
        }
        let fen = board.to_fen();
        let ply = if board.side_to_move() == agent {
            let selection = match agent_move(policy, strategy, risk, &board, &mut rng) {
                Ok(s) => s,
                Err(e) => {
                    abort(&mut record, e);
                    return record;
                }
            };
            let label = match label_move(labeler, &board, selection.mv, &setup.label_limits) {
                Ok(l) => l,
                Err(e) => {
                    abort(&mut record, format!("oracle::label_move: {e}"));
                    return record;
                }
            };
            PlyRecord { fen, mv: selection.mv, by_agent: true, selection: Some(selection), label: Some(label) }
        } else {
            match best_move(opponent, &board, &setup.opponent_limits) {
                Ok(mv) => PlyRecord { fen, mv, by_agent: false, selection: None, label: None },
                Err(e) => {
                    abort(&mut record, format!("oracle::best_move: {e}"));
                    return record;
                }
            }
        };
        board = board.apply_move(ply.mv).expect("selected moves are legal");
        *seen.entry(board.repetition_key()).or_insert(0) += 1;
        record.plies.push(ply);
    }
}
