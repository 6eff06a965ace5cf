use super::{Analysis, CentipawnScore, Oracle, OracleError, OracleLimits, MATE_SCORE};
use crate::chess::{Board, Color, MoveCode, Piece, PieceKind, Promotion};

const PIECE_VALUES: [i32; 6] = [100, 300, 300, 500, 900, 0];

/// Deterministic stand-in for an engine: the best material balance reachable
/// with one move by the side to move (a delivered mate scores as mate in 1),
/// with ties broken by canonical move order. Search limits are ignored.
///
/// The optional positional term adds a small centralisation and
/// pawn-advancement bonus so that quiet moves get graded drops instead of
/// an exact 0.
///
/// With `capture_resolved`, each leaf after the one move is scored by a
/// capture-only search (stand pat allowed) instead of the static count, so
/// the side to move is no longer credited for captures the opponent can
/// simply answer.
#[derive(Clone, Debug, Default)]
pub struct MaterialOracle {
    positional: bool,
    resolve_captures: bool,
}

/// Plies of captures searched below the root move in capture-resolved mode.
const CAPTURE_DEPTH: u32 = 8;

impl MaterialOracle {
    pub fn new() -> MaterialOracle {
        MaterialOracle { positional: false, resolve_captures: false }
    }

    pub fn with_positional() -> MaterialOracle {
        MaterialOracle { positional: true, resolve_captures: false }
    }

    pub fn capture_resolved(self) -> MaterialOracle {
        MaterialOracle { resolve_captures: true, ..self }
    }

    pub fn is_positional(&self) -> bool {
        self.positional
    }

    pub fn is_capture_resolved(&self) -> bool {
        self.resolve_captures
    }

    /// Capture-only negamax from the side to move's point of view.
    fn quiesce(&self, board: &Board, mut alpha: i32, beta: i32, depth: u32) -> i32 {
        let stand = self.static_eval(board, board.side_to_move());
        if stand >= beta || depth == 0 {
            return stand;
        }
        alpha = alpha.max(stand);
        // Most valuable victim first, cheapest attacker first.
        let mut noisy: Vec<(i32, MoveCode)> = board
            .legal_moves()
            .into_iter()
            .filter_map(|mv| {
                let attacker = board.piece_at(mv.from)?.kind;
                let victim = match board.piece_at(mv.to) {
                    Some(p) => PIECE_VALUES[p.kind.index()],
                    None if attacker == PieceKind::Pawn && board.en_passant() == Some(mv.to) => PIECE_VALUES[0],
                    None if mv.promotion != Promotion::None => 0,
                    None => return None,
                };
                Some((PIECE_VALUES[attacker.index()] - 10 * victim, mv))
            })
            .collect();
        noisy.sort();
        for (_, mv) in noisy {
            let child = board.make_unchecked(mv);
            let v = -self.quiesce(&child, -beta, -alpha, depth - 1);
            if v >= beta {
                return v;
            }
            alpha = alpha.max(v);
        }
        alpha
    }

    /// Static score of `board` from `color`'s point of view.
    pub fn static_eval(&self, board: &Board, color: Color) -> i32 {
        let side = |c: Color| -> i32 {
            let mut total = 0;
            for kind in PieceKind::ALL {
                let mut bits = board.pieces(Piece::new(c, kind));
                total += PIECE_VALUES[kind.index()] * bits.count_ones() as i32;
                if self.positional {
                    while bits != 0 {
                        let sq = bits.trailing_zeros() as i32;
                        bits &= bits - 1;
                        total += positional_bonus(kind, c, sq);
                    }
                }
            }
            total
        };
        side(color) - side(color.opposite())
    }
}

fn positional_bonus(kind: PieceKind, color: Color, sq: i32) -> i32 {
    let file = sq % 8;
    let rank = match color {
        Color::White => sq / 8,
        Color::Black => 7 - sq / 8,
    };
    // 0 on the rim, 3 on the four central squares.
    let centrality = 3 - (2 * file - 7).abs().max((2 * (sq / 8) - 7).abs()) / 2;
    match kind {
        PieceKind::Pawn => 4 * (rank - 1).max(0),
        PieceKind::Knight => 6 * centrality,
        PieceKind::Bishop => 4 * centrality,
        PieceKind::Queen => 2 * centrality,
        PieceKind::Rook | PieceKind::King => 0,
    }
}

impl Oracle for MaterialOracle {
    fn analyse(&mut self, board: &Board, limits: &OracleLimits) -> Result<Analysis, OracleError> {
        limits.validate()?;
        let mover = board.side_to_move();
        let mut best: Option<(i32, crate::chess::MoveCode)> = None;
        for mv in board.legal_moves() {
            let child = board.make_unchecked(mv);
            let value = if child.has_legal_moves() {
                if self.resolve_captures {
                    -self.quiesce(&child, -MATE_SCORE, MATE_SCORE, CAPTURE_DEPTH)
                } else {
                    self.static_eval(&child, mover)
                }
            } else if child.in_check() {
                MATE_SCORE - 1
            } else {
                0
            };
            if best.is_none_or(|(v, _)| value > v) {
                best = Some((value, mv));
            }
        }
        let (value, mv) = best.ok_or_else(|| OracleError::Terminal(board.to_fen()))?;
        let score = if value == MATE_SCORE - 1 {
            CentipawnScore::mate(1)
        } else {
            CentipawnScore::cp(value)
        };
        Ok(Analysis { score, best: Some(mv) })
    }

    fn identity(&self) -> String {
        let mut name = String::from("mock-material");
        if self.positional {
            name.push_str("-positional");
        }
        if self.resolve_captures {
            name.push_str(" 1-ply+captures");
        } else {
            name.push_str(" 1-ply");
        }
        name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::MoveCode;
    use crate::oracle::{best_move, evaluate, label_move};

    const LIMITS: OracleLimits = OracleLimits::Depth(1);

    fn board(fen: &str) -> Board {
        Board::from_fen(fen).unwrap()
    }

    #[test]
    fn startpos_is_level() {
        let mut o = MaterialOracle::new();
        assert_eq!(evaluate(&mut o, &Board::startpos(), &LIMITS).unwrap().value, 0);
        let a = best_move(&mut o, &Board::startpos(), &LIMITS).unwrap();
        let b = best_move(&mut o, &Board::startpos(), &LIMITS).unwrap();
        assert_eq!(a, b);
        // All moves tie at 0, so canonical order decides.
        assert_eq!(a, Board::startpos().legal_moves()[0]);
    }

    #[test]
    fn queen_up() {
        let mut o = MaterialOracle::new();
        assert_eq!(evaluate(&mut o, &board("k7/8/8/8/8/8/8/KQ6 w - - 0 1"), &LIMITS).unwrap().value, 900);
        assert_eq!(evaluate(&mut o, &board("k7/8/8/8/8/8/8/KQ6 b - - 0 1"), &LIMITS).unwrap().value, -900);
    }

    #[test]
    fn hanging_rook_swing() {
        // Black rook on d4 hangs to the white knight on c2.
        let b = board("4k3/8/8/8/3r4/8/2N5/4K3 w - - 0 1");
        let mut o = MaterialOracle::new();
        // Static: 300 - 500 = -200; after Nxd4: +300.
        assert_eq!(evaluate(&mut o, &b, &LIMITS).unwrap().value, 300);
        assert_eq!(best_move(&mut o, &b, &LIMITS).unwrap(), MoveCode::from_uci("c2d4").unwrap());
    }

    #[test]
    fn terminal_positions() {
        let mut o = MaterialOracle::new();
        let mated = board("rnb1kbnr/pppp1ppp/8/4p3/6Pq/5P2/PPPPP2P/RNBQKBNR w KQkq - 1 3");
        assert_eq!(evaluate(&mut o, &mated, &LIMITS).unwrap().value, -10_000);
        assert!(matches!(best_move(&mut o, &mated, &LIMITS), Err(OracleError::Terminal(_))));
        let stalemate = board("k7/2Q5/1K6/8/8/8/8/8 b - - 0 1");
        assert_eq!(evaluate(&mut o, &stalemate, &LIMITS).unwrap().value, 0);
    }

    #[test]
    fn single_legal_move() {
        // Black king on a8 in check from the rook on a1 can only go to b8.
        let b = board("k7/8/1K6/8/8/8/8/R7 b - - 0 1");
        let legal = b.legal_moves();
        assert_eq!(legal.len(), 1);
        let mut o = MaterialOracle::new();
        assert_eq!(best_move(&mut o, &b, &LIMITS).unwrap(), legal[0]);
    }

    #[test]
    fn mate_in_one_is_found() {
        let b = board("6k1/5ppp/8/8/8/8/8/R5K1 w - - 0 1");
        let mut o = MaterialOracle::new();
        let s = evaluate(&mut o, &b, &LIMITS).unwrap();
        assert_eq!(s.value, 9999);
        assert!(s.is_mate_mapped);
        assert_eq!(best_move(&mut o, &b, &LIMITS).unwrap().to_uci(), "a1a8");
    }

    #[test]
    fn hanging_the_queen_is_a_blunder() {
        // Qd1-d5 puts the queen en prise to the e6 pawn.
        let b = board("4k3/8/4p3/8/8/8/8/3QK3 w - - 0 1");
        let mut o = MaterialOracle::new();
        let played = MoveCode::from_uci("d1d5").unwrap();
        let label = label_move(&mut o, &b, played, &LIMITS).unwrap();
        assert!(label.is_blunder);
        assert_eq!(label.eval_before.value, 900 - 100);
        assert_eq!(label.eval_after.value, -100);
        assert_eq!(label.drop, 900);
        assert_ne!(label.correction, Some(played));
    }

    #[test]
    fn positional_term_grades_quiet_moves() {
        let mut o = MaterialOracle::with_positional();
        assert_eq!(evaluate(&mut o, &board("k7/8/8/8/8/8/8/KQ6 w - - 0 1"), &LIMITS).unwrap().value, 900 + 2 * 3);
        assert_eq!(evaluate(&mut o, &Board::startpos(), &LIMITS).unwrap().value, 12);
    }

    #[test]
    fn capture_resolution_sees_recaptures() {
        // Qxd5 wins a pawn on one ply but the e6 pawn takes back.
        let b = board("4k3/8/4p3/3p4/8/8/8/3QK3 w - - 0 1");
        let mut plain = MaterialOracle::new();
        assert_eq!(best_move(&mut plain, &b, &LIMITS).unwrap().to_uci(), "d1d5");
        let mut q = MaterialOracle::new().capture_resolved();
        assert_eq!(evaluate(&mut q, &b, &LIMITS).unwrap().value, 900 - 200);
        assert_ne!(best_move(&mut q, &b, &LIMITS).unwrap().to_uci(), "d1d5");
        // A defended pawn trade no longer counts as losing material.
        let trade = board("8/8/4k3/3p4/4P3/8/8/4K3 w - - 0 1");
        let l = label_move(&mut q, &trade, MoveCode::from_uci("e4d5").unwrap(), &LIMITS).unwrap();
        assert_eq!(l.drop, 0);
        assert!(!l.is_blunder);
    }
}
