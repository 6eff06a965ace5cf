//! Chess rules, position representation and the encodings consumed by the models.
//!
//! Squares are indexed a1 = 0, b1 = 1, ..., h8 = 63. Piece planes follow the
//! order `[P, N, B, R, Q, K, p, n, b, r, q, k]`. Both conventions are part of
//! the checkpoint contract: changing either invalidates saved models.

mod board;
mod encode;
mod fen;
mod san;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use board::{perft, Board, IllegalMove};
pub use encode::{
    encode_board, encode_metadata, encode_move, MetadataVector, MoveVector, PieceTensor,
    BOARD_PLANES, METADATA_LEN, MOVE_VECTOR_LEN,
};
pub use fen::{FenError, STARTPOS_FEN};
pub use san::SanError;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Square(u8);

impl Square {
    pub const fn new(index: u8) -> Option<Square> {
        if index < 64 {
            Some(Square(index))
        } else {
            None
        }
    }

    /// `file` and `rank` are zero-based (a = 0, rank 1 = 0).
    pub const fn from_coords(file: u8, rank: u8) -> Square {
        debug_assert!(file < 8 && rank < 8);
        Square(rank * 8 + file)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn file(self) -> u8 {
        self.0 & 7
    }

    pub const fn rank(self) -> u8 {
        self.0 >> 3
    }

    pub(crate) const fn bit(self) -> u64 {
        1u64 << self.0
    }

    pub(crate) const fn unchecked(index: u32) -> Square {
        Square(index as u8)
    }
}

impl fmt::Display for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", (b'a' + self.file()) as char, (b'1' + self.rank()) as char)
    }
}

impl fmt::Debug for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Square {
    type Err = MoveParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.as_bytes();
        if b.len() != 2 || !(b'a'..=b'h').contains(&b[0]) || !(b'1'..=b'8').contains(&b[1]) {
            return Err(MoveParseError(s.to_string()));
        }
        Ok(Square::from_coords(b[0] - b'a', b[1] - b'1'))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Color {
    White,
    Black,
}

impl Color {
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn opposite(self) -> Color {
        match self {
            Color::White => Color::Black,
            Color::Black => Color::White,
        }
    }
}

impl std::ops::Not for Color {
    type Output = Color;

    fn not(self) -> Color {
        self.opposite()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum PieceKind {
    Pawn,
    Knight,
    Bishop,
    Rook,
    Queen,
    King,
}

impl PieceKind {
    pub const ALL: [PieceKind; 6] = [
        PieceKind::Pawn,
        PieceKind::Knight,
        PieceKind::Bishop,
        PieceKind::Rook,
        PieceKind::Queen,
        PieceKind::King,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Piece {
    pub color: Color,
    pub kind: PieceKind,
}

impl Piece {
    pub const fn new(color: Color, kind: PieceKind) -> Piece {
        Piece { color, kind }
    }

    /// Plane index in the `[P, N, B, R, Q, K, p, n, b, r, q, k]` order.
    pub const fn plane(self) -> usize {
        self.color.index() * 6 + self.kind.index()
    }

    pub(crate) const fn from_plane(plane: usize) -> Piece {
        let color = if plane < 6 { Color::White } else { Color::Black };
        Piece::new(color, PieceKind::ALL[plane % 6])
    }

    pub fn to_char(self) -> char {
        let c = match self.kind {
            PieceKind::Pawn => 'p',
            PieceKind::Knight => 'n',
            PieceKind::Bishop => 'b',
            PieceKind::Rook => 'r',
            PieceKind::Queen => 'q',
            PieceKind::King => 'k',
        };
        match self.color {
            Color::White => c.to_ascii_uppercase(),
            Color::Black => c,
        }
    }

    pub fn from_char(c: char) -> Option<Piece> {
        let kind = match c.to_ascii_lowercase() {
            'p' => PieceKind::Pawn,
            'n' => PieceKind::Knight,
            'b' => PieceKind::Bishop,
            'r' => PieceKind::Rook,
            'q' => PieceKind::Queen,
            'k' => PieceKind::King,
            _ => return None,
        };
        let color = if c.is_ascii_uppercase() { Color::White } else { Color::Black };
        Some(Piece::new(color, kind))
    }
}

/// Promotion class of a move. `None` is class 0 so the enum doubles as the
/// five-way label of the policy's promotion head.
#[derive(
    Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub enum Promotion {
    #[default]
    None = 0,
    Knight = 1,
    Bishop = 2,
    Rook = 3,
    Queen = 4,
}

impl Promotion {
    pub const COUNT: usize = 5;

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Promotion> {
        match index {
            0 => Some(Promotion::None),
            1 => Some(Promotion::Knight),
            2 => Some(Promotion::Bishop),
            3 => Some(Promotion::Rook),
            4 => Some(Promotion::Queen),
            _ => None,
        }
    }

    pub fn piece_kind(self) -> Option<PieceKind> {
        match self {
            Promotion::None => None,
            Promotion::Knight => Some(PieceKind::Knight),
            Promotion::Bishop => Some(PieceKind::Bishop),
            Promotion::Rook => Some(PieceKind::Rook),
            Promotion::Queen => Some(PieceKind::Queen),
        }
    }

    fn from_kind(kind: PieceKind) -> Option<Promotion> {
        match kind {
            PieceKind::Knight => Some(Promotion::Knight),
            PieceKind::Bishop => Some(Promotion::Bishop),
            PieceKind::Rook => Some(Promotion::Rook),
            PieceKind::Queen => Some(Promotion::Queen),
            _ => None,
        }
    }
}

/// A move as a (from, to, promotion) triple. Castling is encoded as the king's
/// own move (e1g1), matching UCI. The derived ordering is the canonical move
/// order used for every tie-break in the crate.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MoveCode {
    pub from: Square,
    pub to: Square,
    pub promotion: Promotion,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid UCI move text {0:?}")]
pub struct MoveParseError(pub String);

impl MoveCode {
    pub const fn new(from: Square, to: Square, promotion: Promotion) -> MoveCode {
        MoveCode { from, to, promotion }
    }

    /// Parses long algebraic UCI text such as `e2e4` or `a7a8q`.
    pub fn from_uci(text: &str) -> Result<MoveCode, MoveParseError> {
        let err = || MoveParseError(text.to_string());
        if !text.is_ascii() || !(text.len() == 4 || text.len() == 5) {
            return Err(err());
        }
        let from: Square = text[0..2].parse().map_err(|_| err())?;
        let to: Square = text[2..4].parse().map_err(|_| err())?;
        let promotion = match text.as_bytes().get(4) {
            None => Promotion::None,
            Some(b'n') => Promotion::Knight,
            Some(b'b') => Promotion::Bishop,
            Some(b'r') => Promotion::Rook,
            Some(b'q') => Promotion::Queen,
            Some(_) => return Err(err()),
        };
        if from == to {
            return Err(err());
        }
        Ok(MoveCode { from, to, promotion })
    }

    pub fn to_uci(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MoveCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.from, self.to)?;
        match self.promotion {
            Promotion::None => Ok(()),
            Promotion::Knight => f.write_str("n"),
            Promotion::Bishop => f.write_str("b"),
            Promotion::Rook => f.write_str("r"),
            Promotion::Queen => f.write_str("q"),
        }
    }
}

impl fmt::Debug for MoveCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MoveCode {
    type Err = MoveParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MoveCode::from_uci(s)
    }
}

impl Serialize for MoveCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MoveCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MoveCode::from_uci(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_indexing() {
        assert_eq!("a1".parse::<Square>().unwrap().index(), 0);
        assert_eq!("b1".parse::<Square>().unwrap().index(), 1);
        assert_eq!("h8".parse::<Square>().unwrap().index(), 63);
        assert_eq!("e4".parse::<Square>().unwrap().index(), 28);
        assert!("i1".parse::<Square>().is_err());
        assert!(Square::new(64).is_none());
    }

    #[test]
    fn uci_text() {
        let m = MoveCode::from_uci("a7a8q").unwrap();
        assert_eq!(m.promotion, Promotion::Queen);
        assert_eq!(m.to_uci(), "a7a8q");
        assert_eq!(MoveCode::from_uci("e2e4").unwrap().to_string(), "e2e4");
        for bad in ["e2e", "e2e4k", "e2e2", "z2e4", "e2e4qq"] {
            assert!(MoveCode::from_uci(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_order_is_from_then_to_then_promotion() {
        let a = MoveCode::from_uci("a7a8n").unwrap();
        let b = MoveCode::from_uci("a7a8q").unwrap();
        let c = MoveCode::from_uci("a7b8").unwrap();
        let d = MoveCode::from_uci("b2b3").unwrap();
        assert!(d < a && a < b && b < c);
    }
}
