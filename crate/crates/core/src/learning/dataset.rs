use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use super::GameRecord;
use crate::chess::{Board, MoveCode};

/// Where a blunder example came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub round: u32,
    pub game: u32,
    pub ply: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlunderExample {
    pub board: Board,
    pub mv: MoveCode,
    /// `true` for a played blunder, `false` for the oracle's correction.
    pub label: bool,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlunderDataset {
    pub examples: Vec<BlunderExample>,
}

impl BlunderDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }
}

#[derive(Serialize, Deserialize)]
struct ExampleRow {
    fen: String,
    mv: MoveCode,
    label: u8,
    #[serde(flatten)]
    provenance: Provenance,
}

impl BlunderDataset {
    /// One JSON object per line: `fen`, `mv`, `label` (0|1), `round`, `game`, `ply`.
    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for e in &self.examples {
            let row = ExampleRow { fen: e.board.to_fen(), mv: e.mv, label: e.label as u8, provenance: e.provenance };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<BlunderDataset, String> {
        let mut examples = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ExampleRow = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            let board = Board::from_fen(&row.fen).map_err(|e| format!("line {}: {e}", i + 1))?;
            if !board.is_legal(row.mv) {
                return Err(format!("line {}: illegal move {} in {}", i + 1, row.mv, row.fen));
            }
            if row.label > 1 {
                return Err(format!("line {}: label must be 0 or 1", i + 1));
            }
            examples.push(BlunderExample { board, mv: row.mv, label: row.label == 1, provenance: row.provenance });
        }
        Ok(BlunderDataset { examples })
    }

    /// Appends examples not already present (same position, move and label).
    pub fn merge(&mut self, other: &BlunderDataset) {
        let mut seen: HashSet<(String, MoveCode, bool)> =
            self.examples.iter().map(|e| (e.board.to_fen(), e.mv, e.label)).collect();
        for e in &other.examples {
            if seen.insert((e.board.to_fen(), e.mv, e.label)) {
                self.examples.push(e.clone());
            }
        }
    }
}

/// Positive and negative examples from every flagged agent ply: the played
/// move is a positive and the oracle's correction in the same position a
/// negative. Duplicates are dropped, as are pairs whose correction is the
/// played move itself.
pub fn build_blunder_dataset(records: &[GameRecord], round: u32) -> BlunderDataset {
    let mut ds = BlunderDataset::default();
    let mut seen = HashSet::new();
    for record in records {
        for (ply, p) in record.plies.iter().enumerate() {
            let Some(label) = p.label.filter(|l| l.is_blunder) else { continue };
            let Some(correction) = label.correction else {
                warn!("game {} ply {ply}: blunder without a correction, skipped", record.index);
                continue;
            };
            if correction == p.mv {
                warn!("game {} ply {ply}: correction {correction} equals the flagged move, pair dropped", record.index);
                continue;
            }
            let board = match Board::from_fen(&p.fen) {
                Ok(b) => b,
                Err(e) => {
                    warn!("game {} ply {ply}: unreadable position ({e}), skipped", record.index);
                    continue;
                }
            };
            let provenance = Provenance { round, game: record.index as u32, ply: ply as u32 };
            for (mv, label) in [(p.mv, true), (correction, false)] {
                if seen.insert((p.fen.clone(), mv, label)) {
                    ds.examples.push(BlunderExample { board: board.clone(), mv, label, provenance });
                }
            }
        }
    }
    ds
}

/// Imitation pairs (position, correction, game) for every flagged agent ply,
/// skipping the same contradictory pairs as [`build_blunder_dataset`].
pub fn correction_pairs(records: &[GameRecord]) -> Vec<(Board, MoveCode, usize)> {
    let mut out = Vec::new();
    for record in records {
        for p in record.agent_plies() {
            let Some(label) = p.label.filter(|l| l.is_blunder) else { continue };
            let Some(correction) = label.correction.filter(|&c| c != p.mv) else { continue };
            if let Ok(board) = Board::from_fen(&p.fen) {
                out.push((board, correction, record.index));
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::chess::Color;
    use crate::learning::{Outcome, PlyRecord};
    use crate::oracle::{BlunderLabel, CentipawnScore};
    use crate::selection::SelectionResult;

    /// A record whose agent plies follow `moves` from the start position,
    /// with blunder flags on the listed agent plies. Opponent plies are
    /// whatever the first legal move is.
    pub(crate) fn synthetic_record(index: usize, agent_moves: usize, flagged: &[usize]) -> GameRecord {
        let mut board = Board::startpos();
        let mut plies = Vec::new();
        for k in 0..agent_moves {
            for by_agent in [true, false] {
                let legal = board.legal_moves();
                let mv = legal[(index + k) % legal.len()];
                let correction = legal[(index + k + 1) % legal.len()];
                let label = by_agent.then(|| {
                    let drop = if flagged.contains(&k) { 300 } else { 10 };
                    BlunderLabel::from_scores(CentipawnScore::cp(50), CentipawnScore::cp(50 - drop), Some(correction))
                });
                let selection = by_agent.then(|| SelectionResult {
                    mv,
                    considered_count: 1,
                    legal_count: legal.len(),
                    fallback_used: false,
                    diagnostics: Vec::new(),
                });
                plies.push(PlyRecord { fen: board.to_fen(), mv, by_agent, selection, label });
                board = board.apply_move(mv).unwrap();
            }
        }
        GameRecord {
            index,
            seed: index as u64,
            strategy: "greedy".into(),
            agent_color: Color::White,
            start_fen: Board::startpos().to_fen(),
            plies,
            outcome: Outcome::Adjudicated { agent_eval: 0 },
        }
    }

    #[test]
    fn pairs_per_flagged_ply() {
        let r = synthetic_record(0, 6, &[1, 4]);
        let ds = build_blunder_dataset(&[r.clone()], 2);
        assert_eq!((ds.positives(), ds.negatives()), (2, 2));
        for e in &ds.examples {
            let p = &r.plies[e.provenance.ply as usize];
            assert_eq!(e.board.to_fen(), p.fen);
            let l = p.label.unwrap();
            assert!(l.is_blunder);
            assert_eq!(e.mv, if e.label { p.mv } else { l.correction.unwrap() });
            assert_eq!(e.provenance.round, 2);
        }
        assert!(build_blunder_dataset(&[synthetic_record(0, 6, &[])], 0).is_empty());
        assert_eq!(correction_pairs(&[r]).len(), 2);
    }

    #[test]
    fn duplicates_and_contradictions_dropped() {
        let r = synthetic_record(3, 4, &[0, 2]);
        let ds = build_blunder_dataset(&[r.clone(), r.clone()], 0);
        assert_eq!(ds.len(), 4);

        let mut bad = r;
        let p = &mut bad.plies[0];
        p.label.as_mut().unwrap().correction = Some(p.mv);
        let ds = build_blunder_dataset(&[bad.clone()], 0);
        assert_eq!((ds.positives(), ds.negatives()), (1, 1));
        assert_eq!(correction_pairs(&[bad]).len(), 1);
    }

    #[test]
    fn jsonl_round_trip_and_merge() {
        let ds = build_blunder_dataset(&[synthetic_record(1, 8, &[0, 3, 5])], 1);
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = BlunderDataset::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let mut merged = ds.clone();
        merged.merge(&back);
        assert_eq!(merged, ds);
        assert!(BlunderDataset::read_jsonl(&b"{\"fen\":\"x\"}\n"[..]).is_err());
    }
}
