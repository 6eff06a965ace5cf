use std::fmt;

use thiserror::Error;

use super::{Color, MoveCode, Piece, PieceKind, Promotion, Square};

pub(crate) const CASTLE_WK: u8 = 1;
pub(crate) const CASTLE_WQ: u8 = 2;
pub(crate) const CASTLE_BK: u8 = 4;
pub(crate) const CASTLE_BQ: u8 = 8;

const EMPTY: u8 = 12;

const FILE_A: u64 = 0x0101_0101_0101_0101;
const FILE_H: u64 = FILE_A << 7;
const RANK_1: u64 = 0xff;
const RANK_8: u64 = RANK_1 << 56;

const KNIGHT_ATTACKS: [u64; 64] = step_table(&[(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)]);
const KING_ATTACKS: [u64; 64] = step_table(&[(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]);

const ROOK_DIRS: [(i8, i8); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const BISHOP_DIRS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

const fn step_table(steps: &[(i8, i8)]) -> [u64; 64] {
    let mut table = [0u64; 64];
    let mut sq = 0;
    while sq < 64 {
        let file = (sq % 8) as i8;
        let rank = (sq / 8) as i8;
        let mut i = 0;
        while i < steps.len() {
            let f = file + steps[i].0;
            let r = rank + steps[i].1;
            if f >= 0 && f < 8 && r >= 0 && r < 8 {
                table[sq] |= 1u64 << (r * 8 + f);
            }
            i += 1;
        }
        sq += 1;
    }
    table
}

fn slider_attacks(sq: Square, occupied: u64, dirs: &[(i8, i8); 4]) -> u64 {
    let mut attacks = 0;
    for &(df, dr) in dirs {
        let mut f = sq.file() as i8 + df;
        let mut r = sq.rank() as i8 + dr;
        while (0..8).contains(&f) && (0..8).contains(&r) {
            let bit = 1u64 << (r * 8 + f);
            attacks |= bit;
            if occupied & bit != 0 {
                break;
            }
            f += df;
            r += dr;
        }
    }
    attacks
}

fn pawn_attacks(sq: Square, color: Color) -> u64 {
    let b = sq.bit();
    match color {
        Color::White => ((b & !FILE_A) << 7) | ((b & !FILE_H) << 9),
        Color::Black => ((b & !FILE_H) >> 7) | ((b & !FILE_A) >> 9),
    }
}

fn squares(mut bits: u64) -> impl Iterator<Item = Square> {
    std::iter::from_fn(move || {
        if bits == 0 {
            None
        } else {
            let sq = Square::unchecked(bits.trailing_zeros());
            bits &= bits - 1;
            Some(sq)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal move {mv} in position {fen}")]
pub struct IllegalMove {
    pub mv: MoveCode,
    pub fen: String,
}

/// A complete game-legal chess position.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Board {
    pub(crate) by_piece: [u64; 12],
    pub(crate) by_color: [u64; 2],
    pub(crate) mailbox: [u8; 64],
    pub(crate) side: Color,
    pub(crate) castling: u8,
    pub(crate) ep: Option<Square>,
    pub(crate) halfmove: u32,
    pub(crate) fullmove: u32,
}

impl Default for Board {
    fn default() -> Board {
        Board::startpos()
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Board({})", self.to_fen())
    }
}

impl Board {
    pub fn startpos() -> Board {
        Board::from_fen(super::STARTPOS_FEN).expect("start position FEN is valid")
    }

    pub(crate) fn empty() -> Board {
        Board {
            by_piece: [0; 12],
            by_color: [0; 2],
            mailbox: [EMPTY; 64],
            side: Color::White,
            castling: 0,
            ep: None,
            halfmove: 0,
            fullmove: 1,
        }
    }

    pub fn side_to_move(&self) -> Color {
        self.side
    }

    pub fn en_passant(&self) -> Option<Square> {
        self.ep
    }

    pub fn halfmove_clock(&self) -> u32 {
        self.halfmove
    }

    pub fn fullmove_number(&self) -> u32 {
        self.fullmove
    }

    /// Castling rights as `[white kingside, white queenside, black kingside, black queenside]`.
    pub fn castling_rights(&self) -> [bool; 4] {
        [
            self.castling & CASTLE_WK != 0,
            self.castling & CASTLE_WQ != 0,
            self.castling & CASTLE_BK != 0,
            self.castling & CASTLE_BQ != 0,
        ]
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        match self.mailbox[sq.index()] {
            EMPTY => None,
            p => Some(Piece::from_plane(p as usize)),
        }
    }

    pub fn pieces(&self, piece: Piece) -> u64 {
        self.by_piece[piece.plane()]
    }

    pub fn occupied(&self) -> u64 {
        self.by_color[0] | self.by_color[1]
    }

    pub fn piece_count(&self) -> u32 {
        self.occupied().count_ones()
    }

    pub(crate) fn put(&mut self, sq: Square, piece: Piece) {
        debug_assert_eq!(self.mailbox[sq.index()], EMPTY);
        self.by_piece[piece.plane()] |= sq.bit();
        self.by_color[piece.color.index()] |= sq.bit();
        self.mailbox[sq.index()] = piece.plane() as u8;
    }

    fn remove(&mut self, sq: Square) -> Option<Piece> {
        let piece = self.piece_at(sq)?;
        self.by_piece[piece.plane()] &= !sq.bit();
        self.by_color[piece.color.index()] &= !sq.bit();
        self.mailbox[sq.index()] = EMPTY;
        Some(piece)
    }

    pub fn king_square(&self, color: Color) -> Option<Square> {
        let kings = self.pieces(Piece::new(color, PieceKind::King));
        (kings != 0).then(|| Square::unchecked(kings.trailing_zeros()))
    }

    /// Whether any piece of `by` attacks `sq`.
    pub fn is_attacked(&self, sq: Square, by: Color) -> bool {
        let occ = self.occupied();
        let them = |kind| self.pieces(Piece::new(by, kind));
        if pawn_attacks(sq, by.opposite()) & them(PieceKind::Pawn) != 0 {
            return true;
        }
        if KNIGHT_ATTACKS[sq.index()] & them(PieceKind::Knight) != 0 {
            return true;
        }
        if KING_ATTACKS[sq.index()] & them(PieceKind::King) != 0 {
            return true;
        }
        let queens = them(PieceKind::Queen);
        if slider_attacks(sq, occ, &ROOK_DIRS) & (them(PieceKind::Rook) | queens) != 0 {
            return true;
        }
        slider_attacks(sq, occ, &BISHOP_DIRS) & (them(PieceKind::Bishop) | queens) != 0
    }

    pub fn in_check(&self) -> bool {
        self.color_in_check(self.side)
    }

    pub(crate) fn color_in_check(&self, color: Color) -> bool {
        self.king_square(color)
            .is_some_and(|k| self.is_attacked(k, color.opposite()))
    }

    fn attacks_from(&self, sq: Square, piece: Piece) -> u64 {
        let occ = self.occupied();
        match piece.kind {
            PieceKind::Pawn => pawn_attacks(sq, piece.color),
            PieceKind::Knight => KNIGHT_ATTACKS[sq.index()],
            PieceKind::Bishop => slider_attacks(sq, occ, &BISHOP_DIRS),
            PieceKind::Rook => slider_attacks(sq, occ, &ROOK_DIRS),
            PieceKind::Queen => {
                slider_attacks(sq, occ, &BISHOP_DIRS) | slider_attacks(sq, occ, &ROOK_DIRS)
            }
            PieceKind::King => KING_ATTACKS[sq.index()],
        }
    }

    fn pseudo_legal(&self, out: &mut Vec<MoveCode>) {
        let us = self.side;
        let own = self.by_color[us.index()];
        let enemy = self.by_color[us.opposite().index()];
        let occ = own | enemy;
        let last_rank = match us {
            Color::White => RANK_8,
            Color::Black => RANK_1,
        };
        let push = |out: &mut Vec<MoveCode>, from: Square, to: Square| {
            if to.bit() & last_rank != 0 {
                for promotion in [Promotion::Knight, Promotion::Bishop, Promotion::Rook, Promotion::Queen] {
                    out.push(MoveCode::new(from, to, promotion));
                }
            } else {
                out.push(MoveCode::new(from, to, Promotion::None));
            }
        };

        for sq in squares(own) {
            let piece = self.piece_at(sq).expect("own bitboard matches mailbox");
            match piece.kind {
                PieceKind::Pawn => {
                    let (step, start_rank): (i8, u8) = match us {
                        Color::White => (8, 1),
                        Color::Black => (-8, 6),
                    };
                    let one = (sq.index() as i8 + step) as u8;
                    if occ & (1u64 << one) == 0 {
                        push(out, sq, Square(one));
                        if sq.rank() == start_rank {
                            let two = (one as i8 + step) as u8;
                            if occ & (1u64 << two) == 0 {
                                out.push(MoveCode::new(sq, Square(two), Promotion::None));
                            }
                        }
                    }
                    let mut targets = pawn_attacks(sq, us) & enemy;
                    if let Some(ep) = self.ep {
                        targets |= pawn_attacks(sq, us) & ep.bit();
                    }
                    for to in squares(targets) {
                        push(out, sq, to);
                    }
                }
                _ => {
                    for to in squares(self.attacks_from(sq, piece) & !own) {
                        out.push(MoveCode::new(sq, to, Promotion::None));
                    }
                }
            }
        }

        // Castling: king and rook on home squares is guaranteed by the rights
        // invariant; path emptiness and attacked squares are checked here.
        let them = us.opposite();
        let (k_right, q_right, home) = match us {
            Color::White => (CASTLE_WK, CASTLE_WQ, 0u8),
            Color::Black => (CASTLE_BK, CASTLE_BQ, 56u8),
        };
        if self.castling & (k_right | q_right) != 0 && !self.is_attacked(Square(home + 4), them) {
            if self.castling & k_right != 0
                && occ & ((1u64 << (home + 5)) | (1u64 << (home + 6))) == 0
                && !self.is_attacked(Square(home + 5), them)
            {
                out.push(MoveCode::new(Square(home + 4), Square(home + 6), Promotion::None));
            }
            if self.castling & q_right != 0
                && occ & ((1u64 << (home + 1)) | (1u64 << (home + 2)) | (1u64 << (home + 3))) == 0
                && !self.is_attacked(Square(home + 3), them)
            {
                out.push(MoveCode::new(Square(home + 4), Square(home + 2), Promotion::None));
            }
        }
    }

    /// All legal moves in canonical order (from, to, promotion ascending).
    pub fn legal_moves(&self) -> Vec<MoveCode> {
        let mut moves = Vec::with_capacity(48);
        self.pseudo_legal(&mut moves);
        let us = self.side;
        moves.retain(|&m| !self.make_unchecked(m).color_in_check(us));
        moves.sort_unstable();
        moves
    }

    /// Whether at least one legal move exists; cheaper than `legal_moves`.
    pub fn has_legal_moves(&self) -> bool {
        let mut moves = Vec::with_capacity(48);
        self.pseudo_legal(&mut moves);
        let us = self.side;
        moves.into_iter().any(|m| !self.make_unchecked(m).color_in_check(us))
    }

    pub fn is_legal(&self, mv: MoveCode) -> bool {
        self.legal_moves().contains(&mv)
    }

    pub fn is_checkmate(&self) -> bool {
        self.in_check() && !self.has_legal_moves()
    }

    pub fn is_stalemate(&self) -> bool {
        !self.in_check() && !self.has_legal_moves()
    }

    /// Applies `mv` after verifying it is legal.
    pub fn apply_move(&self, mv: MoveCode) -> Result<Board, IllegalMove> {
        if !self.is_legal(mv) {
            return Err(IllegalMove { mv, fen: self.to_fen() });
        }
        Ok(self.make_unchecked(mv))
    }

    /// Applies a move known to be (pseudo-)legal; callers must have taken it
    /// from [`Board::legal_moves`].
    pub(crate) fn make_unchecked(&self, mv: MoveCode) -> Board {
        let mut next = self.clone();
        let us = self.side;
        let moving = next.remove(mv.from).expect("move starts on an occupied square");
        let mut captured = next.remove(mv.to);

        if moving.kind == PieceKind::Pawn && Some(mv.to) == self.ep && captured.is_none() {
            let victim = match us {
                Color::White => Square(mv.to.0 - 8),
                Color::Black => Square(mv.to.0 + 8),
            };
            captured = next.remove(victim);
        }

        let placed = match mv.promotion.piece_kind() {
            Some(kind) if moving.kind == PieceKind::Pawn => Piece::new(us, kind),
            _ => moving,
        };
        next.put(mv.to, placed);

        if moving.kind == PieceKind::King && mv.from.file() == 4 && (mv.to.file() == 6 || mv.to.file() == 2) && mv.from.rank() == mv.to.rank() {
            let rank_base = mv.from.rank() * 8;
            let (rook_from, rook_to) = if mv.to.file() == 6 {
                (rank_base + 7, rank_base + 5)
            } else {
                (rank_base, rank_base + 3)
            };
            if let Some(rook) = next.remove(Square(rook_from)) {
                next.put(Square(rook_to), rook);
            }
        }

        for sq in [mv.from, mv.to] {
            next.castling &= !match sq.index() {
                0 => CASTLE_WQ,
                7 => CASTLE_WK,
                4 => CASTLE_WK | CASTLE_WQ,
                56 => CASTLE_BQ,
                63 => CASTLE_BK,
                60 => CASTLE_BK | CASTLE_BQ,
                _ => 0,
            };
        }

        next.ep = None;
        if moving.kind == PieceKind::Pawn && mv.from.rank().abs_diff(mv.to.rank()) == 2 {
            next.ep = Some(Square((mv.from.0 + mv.to.0) / 2));
        }

        if moving.kind == PieceKind::Pawn || captured.is_some() {
            next.halfmove = 0;
        } else {
            next.halfmove = self.halfmove + 1;
        }
        if us == Color::Black {
            next.fullmove = self.fullmove + 1;
        }
        next.side = us.opposite();
        next
    }

    /// Whether the side to move has a legal en-passant capture.
    pub(crate) fn has_legal_ep(&self) -> bool {
        let Some(ep) = self.ep else { return false };
        self.legal_moves().iter().any(|m| {
            m.to == ep && self.piece_at(m.from).is_some_and(|p| p.kind == PieceKind::Pawn)
        })
    }

    /// Position identity for repetition detection: placement, side to move,
    /// castling rights and an en-passant square only when a capture is
    /// actually available.
    pub fn repetition_key(&self) -> (Vec<u64>, Color, u8, Option<Square>) {
        let ep = if self.has_legal_ep() { self.ep } else { None };
        (self.by_piece.to_vec(), self.side, self.castling, ep)
    }

    /// Material count by piece kind for `color`, in `PieceKind::ALL` order.
    pub fn material(&self, color: Color) -> [u32; 6] {
        PieceKind::ALL.map(|k| self.pieces(Piece::new(color, k)).count_ones())
    }
}

/// Number of leaf nodes of the legal move tree at exactly `depth` plies.
pub fn perft(board: &Board, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let moves = board.legal_moves();
    if depth == 1 {
        return moves.len() as u64;
    }
    moves
        .into_iter()
        .map(|m| perft(&board.make_unchecked(m), depth - 1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(s: &str) -> MoveCode {
        MoveCode::from_uci(s).unwrap()
    }

    #[test]
    fn startpos_has_twenty_moves() {
        let moves = Board::startpos().legal_moves();
        assert_eq!(moves.len(), 20);
        assert!(moves.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn e2e4_bookkeeping() {
        let b = Board::startpos().apply_move(mv("e2e4")).unwrap();
        assert_eq!(b.to_fen(), "rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq e3 0 1");
    }

    #[test]
    fn illegal_move_rejected() {
        let err = Board::startpos().apply_move(mv("e2e5")).unwrap_err();
        assert_eq!(err.mv, mv("e2e5"));
    }

    #[test]
    fn promotion_replaces_pawn() {
        let b = Board::from_fen("8/P6k/8/8/8/8/8/K7 w - - 0 1").unwrap();
        let next = b.apply_move(mv("a7a8q")).unwrap();
        assert_eq!(
            next.piece_at("a8".parse().unwrap()),
            Some(Piece::new(Color::White, PieceKind::Queen))
        );
        assert_eq!(next.pieces(Piece::new(Color::White, PieceKind::Pawn)), 0);
    }

    #[test]
    fn rook_and_kings() {
        let b = Board::from_fen("k7/8/8/8/8/8/8/K6R w - - 0 1").unwrap();
        let moves = b.legal_moves();
        assert!(moves.contains(&mv("h1h8")));
        for m in &moves {
            let next = b.make_unchecked(*m);
            let wk = next.king_square(Color::White).unwrap();
            let bk = next.king_square(Color::Black).unwrap();
            assert!(wk.file().abs_diff(bk.file()) > 1 || wk.rank().abs_diff(bk.rank()) > 1);
        }
    }

    #[test]
    fn fools_mate_has_no_moves() {
        let b = Board::from_fen("rnb1kbnr/pppp1ppp/8/4p3/6Pq/5P2/PPPPP2P/RNBQKBNR w KQkq - 1 3").unwrap();
        assert!(b.legal_moves().is_empty());
        assert!(b.is_checkmate());
    }

    #[test]
    fn castling_moves_rook_and_clears_rights() {
        let b = Board::from_fen("r3k2r/8/8/8/8/8/8/R3K2R w KQkq - 0 1").unwrap();
        let next = b.apply_move(mv("e1g1")).unwrap();
        assert_eq!(next.to_fen(), "r3k2r/8/8/8/8/8/8/R4RK1 b kq - 1 1");
        let next = next.apply_move(mv("a8a1")).unwrap();
        assert_eq!(next.to_fen(), "4k2r/8/8/8/8/8/8/r4RK1 w k - 0 2");
    }

    #[test]
    fn en_passant_capture_removes_pawn() {
        let b = Board::from_fen("4k3/8/8/3pP3/8/8/8/4K3 w - d6 0 2").unwrap();
        let next = b.apply_move(mv("e5d6")).unwrap();
        assert_eq!(next.to_fen(), "4k3/8/3P4/8/8/8/8/4K3 b - - 0 2");
    }

    #[test]
    fn perft_startpos_shallow() {
        let b = Board::startpos();
        assert_eq!(perft(&b, 0), 1);
        assert_eq!(perft(&b, 1), 20);
        assert_eq!(perft(&b, 2), 400);
        assert_eq!(perft(&b, 3), 8902);
    }
}
