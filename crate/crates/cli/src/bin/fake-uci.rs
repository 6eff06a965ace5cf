//! Scripted UCI engine for protocol tests.
//!
//! Usage: `fake-uci <mode> [marker-file]`. Modes:
//! `cp`, `mate`, `interleaved`, `no-uciok`, `no-score`, `illegal-bestmove`,
//! `crash-on-go`, `hang-on-go`. The last two misbehave on the first `go`
//! only: they create the marker file, and later processes that find it
//! behave like `cp`.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use ogss::chess::{Board, MoveCode};

fn apply_position(args: &[&str]) -> Option<Board> {
    let (mut board, rest) = match args.first()? {
        &"startpos" => (Board::startpos(), &args[1..]),
        &"fen" => {
            let end = args.iter().position(|&t| t == "moves").unwrap_or(args.len());
            (Board::from_fen(&args[1..end].join(" ")).ok()?, &args[end..])
        }
        _ => return None,
    };
    if rest.first() == Some(&"moves") {
        for m in &rest[1..] {
            board = board.apply_move(MoveCode::from_uci(m).ok()?).ok()?;
        }
    }
    Some(board)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut mode = args.get(1).cloned().unwrap_or_else(|| "cp".into());
    let marker = args.get(2).map(PathBuf::from);
    if matches!(mode.as_str(), "crash-on-go" | "hang-on-go") && marker.as_ref().is_some_and(|m| m.exists()) {
        mode = "cp".into();
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut board = Board::startpos();
    let mut hung = false;
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if hung {
            if tokens.first() == Some(&"quit") {
                return;
            }
            continue;
        }
        match tokens.first().copied() {
            Some("uci") => {
                writeln!(out, "id name fake-uci {mode}").unwrap();
                writeln!(out, "id author nobody").unwrap();
                writeln!(out, "option name Hash type spin default 16 min 1 max 1024").unwrap();
                if mode != "no-uciok" {
                    writeln!(out, "uciok").unwrap();
                }
            }
            Some("isready") => writeln!(out, "readyok").unwrap(),
            Some("position") => {
                if let Some(b) = apply_position(&tokens[1..]) {
                    board = b;
                }
            }
            Some("go") => {
                if let (Some(m), "crash-on-go" | "hang-on-go") = (&marker, mode.as_str()) {
                    std::fs::write(m, b"fired").unwrap();
                    if mode == "crash-on-go" {
                        std::process::exit(3);
                    }
                    hung = true;
                    continue;
                }
                let best = board.legal_moves().first().copied();
                let Some(best) = best else {
                    let score = if board.in_check() { "mate 0" } else { "cp 0" };
                    writeln!(out, "info depth 0 score {score}").unwrap();
                    writeln!(out, "bestmove (none)").unwrap();
                    out.flush().unwrap();
                    continue;
                };
                match mode.as_str() {
                    "mate" => writeln!(out, "info depth 5 score mate 3 pv {best}").unwrap(),
                    "interleaved" => {
                        writeln!(out, "info string NNUE evaluation using nn.bin score cp 999").unwrap();
                        writeln!(out, "info depth 1 seldepth 1 score cp 5 lowerbound nodes 20").unwrap();
                        writeln!(out, "info depth 2 currmove {best} currmovenumber 1").unwrap();
                        writeln!(out, "info depth 2 seldepth 3 multipv 1 score mate -4 nodes 80 pv {best}").unwrap();
                        writeln!(out, "info depth 3 score wdl 500 400 100").unwrap();
                        writeln!(out, "info depth 3 seldepth 4 score cp -21 nodes 300 nps 1000 pv {best}").unwrap();
                        writeln!(out, "info nodes 320 hashfull 1").unwrap();
                    }
                    "no-score" => {}
                    _ => writeln!(out, "info depth 1 score cp 37 pv {best}").unwrap(),
                }
                if mode == "illegal-bestmove" {
                    writeln!(out, "bestmove a1a1x").unwrap();
                } else {
                    writeln!(out, "bestmove {best}").unwrap();
                }
            }
            Some("quit") => return,
            _ => {}
        }
        out.flush().unwrap();
    }
}
