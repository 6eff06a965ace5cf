//! FEN parsing and emission.
//!
//! Emission is canonical: castling rights are written in `KQkq` order (or `-`),
//! and the en-passant field is emitted exactly as stored. After a double pawn
//! push the stored square is always the skipped square, whether or not a
//! capture is possible, so `to_fen(parse_fen(f)) == f` for any canonical `f`.

use std::fmt::Write as _;

use thiserror::Error;

use super::board::{Board, CASTLE_BK, CASTLE_BQ, CASTLE_WK, CASTLE_WQ};
use super::{Color, Piece, PieceKind, Square};

pub const STARTPOS_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FenError {
    #[error("FEN must have 6 fields, found {0}")]
    FieldCount(usize),
    #[error("piece placement field: {0}")]
    Placement(String),
    #[error("side-to-move field: expected 'w' or 'b', found {0:?}")]
    SideToMove(String),
    #[error("castling field: {0}")]
    Castling(String),
    #[error("en-passant field: {0}")]
    EnPassant(String),
    #[error("halfmove clock field: {0:?} is not a non-negative integer")]
    Halfmove(String),
    #[error("fullmove number field: {0:?} is not a positive integer")]
    Fullmove(String),
    #[error("impossible position: {0}")]
    Position(String),
}

impl Board {
    pub fn from_fen(text: &str) -> Result<Board, FenError> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(FenError::FieldCount(fields.len()));
        }
        let mut board = Board::empty();

        let ranks: Vec<&str> = fields[0].split('/').collect();
        if ranks.len() != 8 {
            return Err(FenError::Placement(format!("expected 8 ranks, found {}", ranks.len())));
        }
        for (i, row) in ranks.iter().enumerate() {
            let rank = 7 - i as u8;
            let mut file = 0u8;
            for c in row.chars() {
                if let Some(d) = c.to_digit(10) {
                    if !(1..=8).contains(&d) {
                        return Err(FenError::Placement(format!("bad empty-run digit {c:?}")));
                    }
                    file += d as u8;
                } else {
                    let piece = Piece::from_char(c)
                        .ok_or_else(|| FenError::Placement(format!("illegal piece character {c:?}")))?;
                    if file >= 8 {
                        return Err(FenError::Placement(format!("rank {} overflows", rank + 1)));
                    }
                    board.put(Square::from_coords(file, rank), piece);
                    file += 1;
                }
                if file > 8 {
                    return Err(FenError::Placement(format!("rank {} overflows", rank + 1)));
                }
            }
            if file != 8 {
                return Err(FenError::Placement(format!("rank {} has {} files", rank + 1, file)));
            }
        }

        board.side = match fields[1] {
            "w" => Color::White,
            "b" => Color::Black,
            other => return Err(FenError::SideToMove(other.to_string())),
        };

        if fields[2] != "-" {
            for c in fields[2].chars() {
                let bit = match c {
                    'K' => CASTLE_WK,
                    'Q' => CASTLE_WQ,
                    'k' => CASTLE_BK,
                    'q' => CASTLE_BQ,
                    _ => return Err(FenError::Castling(format!("unexpected character {c:?}"))),
                };
                if board.castling & bit != 0 {
                    return Err(FenError::Castling(format!("duplicate right {c:?}")));
                }
                board.castling |= bit;
            }
        }

        if fields[3] != "-" {
            let sq: Square = fields[3]
                .parse()
                .map_err(|_| FenError::EnPassant(format!("{:?} is not a square", fields[3])))?;
            let expected_rank = match board.side {
                Color::White => 5,
                Color::Black => 2,
            };
            if sq.rank() != expected_rank {
                return Err(FenError::EnPassant(format!("{sq} is on the wrong rank")));
            }
            board.ep = Some(sq);
        }

        board.halfmove = fields[4]
            .parse()
            .map_err(|_| FenError::Halfmove(fields[4].to_string()))?;
        board.fullmove = match fields[5].parse::<u32>() {
            Ok(n) if n >= 1 => n,
            _ => return Err(FenError::Fullmove(fields[5].to_string())),
        };

        validate(&board)?;
        Ok(board)
    }

    pub fn to_fen(&self) -> String {
        let mut out = String::with_capacity(90);
        for rank in (0..8).rev() {
            let mut empty = 0;
            for file in 0..8 {
                match self.piece_at(Square::from_coords(file, rank)) {
                    Some(p) => {
                        if empty > 0 {
                            write!(out, "{empty}").unwrap();
                            empty = 0;
                        }
                        out.push(p.to_char());
                    }
                    None => empty += 1,
                }
            }
            if empty > 0 {
                write!(out, "{empty}").unwrap();
            }
            if rank > 0 {
                out.push('/');
            }
        }
        out.push(' ');
        out.push(match self.side {
            Color::White => 'w',
            Color::Black => 'b',
        });
        out.push(' ');
        if self.castling == 0 {
            out.push('-');
        } else {
            for (bit, c) in [(CASTLE_WK, 'K'), (CASTLE_WQ, 'Q'), (CASTLE_BK, 'k'), (CASTLE_BQ, 'q')] {
                if self.castling & bit != 0 {
                    out.push(c);
                }
            }
        }
        match self.ep {
            Some(sq) => write!(out, " {sq}").unwrap(),
            None => out.push_str(" -"),
        }
        write!(out, " {} {}", self.halfmove, self.fullmove).unwrap();
        out
    }
}

fn validate(board: &Board) -> Result<(), FenError> {
    for color in [Color::White, Color::Black] {
        let kings = board.pieces(Piece::new(color, PieceKind::King)).count_ones();
        if kings != 1 {
            return Err(FenError::Position(format!("{color:?} has {kings} kings, expected 1")));
        }
    }
    let pawns = board.pieces(Piece::new(Color::White, PieceKind::Pawn))
        | board.pieces(Piece::new(Color::Black, PieceKind::Pawn));
    if pawns & 0xff00_0000_0000_00ff != 0 {
        return Err(FenError::Position("pawn on the first or last rank".into()));
    }
    if board.color_in_check(board.side.opposite()) {
        return Err(FenError::Position("side not to move is in check".into()));
    }
    let has = |sq: u8, c: char| board.piece_at(Square::new(sq).unwrap()) == Piece::from_char(c);
    for (bit, king, rook, label) in [
        (CASTLE_WK, 4, 7, 'K'),
        (CASTLE_WQ, 4, 0, 'Q'),
        (CASTLE_BK, 60, 63, 'k'),
        (CASTLE_BQ, 60, 56, 'q'),
    ] {
        let king_char = if label.is_ascii_uppercase() { 'K' } else { 'k' };
        let rook_char = if label.is_ascii_uppercase() { 'R' } else { 'r' };
        if board.castling & bit != 0 && !(has(king, king_char) && has(rook, rook_char)) {
            return Err(FenError::Castling(format!(
                "right {label:?} without king and rook on their home squares"
            )));
        }
    }
    if let Some(ep) = board.ep {
        let (pawn_sq, pawn) = match board.side {
            Color::White => (ep.index() - 8, 'p'),
            Color::Black => (ep.index() + 8, 'P'),
        };
        if board.piece_at(ep).is_some() || !has(pawn_sq as u8, pawn) {
            return Err(FenError::EnPassant(format!("{ep} does not follow a double pawn push")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn startpos_fields() {
        let b = Board::from_fen(STARTPOS_FEN).unwrap();
        assert_eq!(b.side_to_move(), Color::White);
        assert_eq!(b.castling_rights(), [true; 4]);
        assert_eq!(b.piece_count(), 32);
        assert_eq!(b.to_fen(), STARTPOS_FEN);
    }

    #[test]
    fn missing_kings() {
        assert!(matches!(
            Board::from_fen("8/8/8/8/8/8/8/8 w - - 0 1"),
            Err(FenError::Position(_))
        ));
    }

    #[test]
    fn field_count() {
        assert_eq!(
            Board::from_fen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0"),
            Err(FenError::FieldCount(5))
        );
    }

    #[test]
    fn error_names_field() {
        let cases = [
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNX w KQkq - 0 1", "placement"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR x KQkq - 0 1", "side-to-move"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkX - 0 1", "castling"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq e9 0 1", "en-passant"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - x 1", "halfmove"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 0", "fullmove"),
            ("kk6/8/8/8/8/8/8/K7 w - - 0 1", "impossible"),
            ("k7/8/8/8/8/8/8/RK6 w - - 0 1", "impossible"),
            ("P3k3/8/8/8/8/8/8/4K3 w - - 0 1", "impossible"),
        ];
        for (fen, field) in cases {
            let err = Board::from_fen(fen).unwrap_err().to_string();
            assert!(err.contains(field), "{fen}: {err}");
        }
    }

    #[test]
    fn castling_is_normalized() {
        let b = Board::from_fen("r3k2r/8/8/8/8/8/8/R3K2R w qkQK - 0 1").unwrap();
        assert_eq!(b.to_fen(), "r3k2r/8/8/8/8/8/8/R3K2R w KQkq - 0 1");
    }
}
