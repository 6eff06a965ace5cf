//! Standard Algebraic Notation: lenient parsing against the legal move list,
//! canonical emission for PGN export.

use thiserror::Error;

use super::{Board, MoveCode, PieceKind, Promotion, Square};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SanError {
    #[error("malformed SAN {0:?}")]
    Syntax(String),
    #[error("SAN {0:?} matches no legal move")]
    Illegal(String),
    #[error("SAN {0:?} is ambiguous")]
    Ambiguous(String),
}

struct SanPattern {
    kind: PieceKind,
    from_file: Option<u8>,
    from_rank: Option<u8>,
    to: Square,
    promotion: Promotion,
}

fn piece_letter(c: u8) -> Option<PieceKind> {
    match c {
        b'N' => Some(PieceKind::Knight),
        b'B' => Some(PieceKind::Bishop),
        b'R' => Some(PieceKind::Rook),
        b'Q' => Some(PieceKind::Queen),
        b'K' => Some(PieceKind::King),
        _ => None,
    }
}

fn parse_pattern(san: &str) -> Option<SanPattern> {
    let mut s: Vec<u8> = san.bytes().filter(|&c| c != b'x' && c != b'-' && c != b':').collect();
    let mut promotion = Promotion::None;
    if let Some(&last) = s.last() {
        if let Some(kind) = piece_letter(last).filter(|k| *k != PieceKind::King) {
            promotion = Promotion::from_kind(kind)?;
            s.pop();
            if s.last() == Some(&b'=') {
                s.pop();
            }
        }
    }
    let kind = match s.first().copied().and_then(piece_letter) {
        Some(kind) => {
            s.remove(0);
            kind
        }
        None => PieceKind::Pawn,
    };
    if s.len() < 2 {
        return None;
    }
    let dest = std::str::from_utf8(&s[s.len() - 2..]).ok()?;
    let to: Square = dest.parse().ok()?;
    let mut from_file = None;
    let mut from_rank = None;
    for &c in &s[..s.len() - 2] {
        match c {
            b'a'..=b'h' if from_file.is_none() => from_file = Some(c - b'a'),
            b'1'..=b'8' if from_rank.is_none() => from_rank = Some(c - b'1'),
            _ => return None,
        }
    }
    Some(SanPattern { kind, from_file, from_rank, to, promotion })
}

impl Board {
    /// Resolves SAN text (check/annotation suffixes allowed) to a legal move.
    pub fn parse_san(&self, text: &str) -> Result<MoveCode, SanError> {
        let san = text.trim_end_matches(['+', '#', '!', '?']);
        let legal = self.legal_moves();
        let castle = match san {
            "O-O" | "0-0" => Some(6),
            "O-O-O" | "0-0-0" => Some(2),
            _ => None,
        };
        let candidates: Vec<MoveCode> = if let Some(file) = castle {
            legal
                .into_iter()
                .filter(|m| self.is_castling(*m) && m.to.file() == file)
                .collect()
        } else {
            let p = parse_pattern(san).ok_or_else(|| SanError::Syntax(text.to_string()))?;
            legal
                .into_iter()
                .filter(|m| {
                    self.piece_at(m.from).is_some_and(|pc| pc.kind == p.kind)
                        && m.to == p.to
                        && m.promotion == p.promotion
                        && p.from_file.is_none_or(|f| m.from.file() == f)
                        && p.from_rank.is_none_or(|r| m.from.rank() == r)
                        && !(p.kind == PieceKind::King && self.is_castling(*m))
                })
                .collect()
        };
        match candidates.as_slice() {
            [m] => Ok(*m),
            [] => Err(SanError::Illegal(text.to_string())),
            _ => Err(SanError::Ambiguous(text.to_string())),
        }
    }

    fn is_castling(&self, m: MoveCode) -> bool {
        self.piece_at(m.from).is_some_and(|p| p.kind == PieceKind::King)
            && m.from.file().abs_diff(m.to.file()) == 2
    }

    /// Canonical SAN for a legal move, including `+`/`#` suffixes.
    pub fn to_san(&self, mv: MoveCode) -> String {
        let piece = self.piece_at(mv.from).expect("move from an occupied square");
        let mut out = String::new();
        if self.is_castling(mv) {
            out.push_str(if mv.to.file() == 6 { "O-O" } else { "O-O-O" });
        } else {
            let capture = self.piece_at(mv.to).is_some()
                || (piece.kind == PieceKind::Pawn && mv.from.file() != mv.to.file());
            if piece.kind == PieceKind::Pawn {
                if capture {
                    out.push((b'a' + mv.from.file()) as char);
                }
            } else {
                out.push(piece.to_char().to_ascii_uppercase());
                let rivals: Vec<MoveCode> = self
                    .legal_moves()
                    .into_iter()
                    .filter(|m| m.to == mv.to && m.from != mv.from && self.piece_at(m.from) == Some(piece))
                    .collect();
                if !rivals.is_empty() {
                    let same_file = rivals.iter().any(|m| m.from.file() == mv.from.file());
                    let same_rank = rivals.iter().any(|m| m.from.rank() == mv.from.rank());
                    if !same_file {
                        out.push((b'a' + mv.from.file()) as char);
                    } else if !same_rank {
                        out.push((b'1' + mv.from.rank()) as char);
                    } else {
                        out.push_str(&mv.from.to_string());
                    }
                }
            }
            if capture {
                out.push('x');
            }
            out.push_str(&mv.to.to_string());
            if let Some(kind) = mv.promotion.piece_kind() {
                out.push('=');
                out.push(super::Piece::new(piece.color, kind).to_char().to_ascii_uppercase());
            }
        }
        let next = self.make_unchecked(mv);
        if next.in_check() {
            out.push(if next.legal_moves().is_empty() { '#' } else { '+' });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(fen: &str) -> Board {
        Board::from_fen(fen).unwrap()
    }

    #[test]
    fn resolves_common_forms() {
        let start = Board::startpos();
        assert_eq!(start.parse_san("e4").unwrap().to_uci(), "e2e4");
        assert_eq!(start.parse_san("Nf3").unwrap().to_uci(), "g1f3");
        assert!(matches!(start.parse_san("e5"), Err(SanError::Illegal(_))));
        assert!(matches!(start.parse_san("Zz9"), Err(SanError::Syntax(_))));

        let castle = b("r3k2r/8/8/8/8/8/8/R3K2R w KQkq - 0 1");
        assert_eq!(castle.parse_san("O-O").unwrap().to_uci(), "e1g1");
        assert_eq!(castle.parse_san("O-O-O+").unwrap().to_uci(), "e1c1");

        let promo = b("8/P6k/8/8/8/8/8/K7 w - - 0 1");
        assert_eq!(promo.parse_san("a8=Q").unwrap().to_uci(), "a7a8q");
        assert_eq!(promo.parse_san("a8N").unwrap().to_uci(), "a7a8n");
    }

    #[test]
    fn disambiguation() {
        let pos = b("4k3/8/8/8/8/8/4K3/R6R w - - 0 1");
        assert!(matches!(pos.parse_san("Rd1"), Err(SanError::Ambiguous(_))));
        assert_eq!(pos.parse_san("Rad1").unwrap().to_uci(), "a1d1");
        let mv = MoveCode::from_uci("h1f1").unwrap();
        assert_eq!(pos.to_san(mv), "Rhf1");
    }

    #[test]
    fn emission_round_trips() {
        let pos = b("r3k2r/Pppp1ppp/1b3nbN/nP6/BBP1P3/q4N2/Pp1P2PP/R2Q1RK1 w kq - 0 1");
        for m in pos.legal_moves() {
            let san = pos.to_san(m);
            assert_eq!(pos.parse_san(&san).unwrap(), m, "{san}");
        }
    }
}
