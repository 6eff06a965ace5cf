use std::io::{self, BufRead, Write};

use super::GameRecord;
use crate::chess::Board;
use crate::ingest::write_pgn_game;

/// Writes one JSON record per line.
pub fn write_archive(records: &[GameRecord], mut out: impl Write) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_archive(input: impl BufRead) -> Result<Vec<GameRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

/// PGN export for inspection. Tags carry the strategy, seed and outcome.
pub fn write_archive_pgn(records: &[GameRecord], mut out: impl Write) -> io::Result<()> {
    for r in records {
        let start = Board::from_fen(&r.start_fen).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        let (white, black) = match r.agent_color {
            crate::chess::Color::White => ("agent", "oracle"),
            crate::chess::Color::Black => ("oracle", "agent"),
        };
        let outcome = serde_json::to_value(&r.outcome)?;
        let tags = [
            ("Event", format!("ogss {}", r.strategy)),
            ("Round", r.index.to_string()),
            ("White", white.to_string()),
            ("Black", black.to_string()),
            ("Seed", r.seed.to_string()),
            ("Termination", outcome["kind"].as_str().unwrap_or("unknown").to_string()),
        ];
        let mut tags = tags.to_vec();
        if start != Board::startpos() {
            tags.push(("SetUp", "1".into()));
            tags.push(("FEN", r.start_fen.clone()));
        }
        let moves: Vec<_> = r.plies.iter().map(|p| p.mv).collect();
        write_pgn_game(&mut out, &tags, &start, &moves, r.result())?;
    }
    Ok(())
}
