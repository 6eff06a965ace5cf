//! UCI client over a child process.
//!
//! Outbound: `uci`, `isready`, `setoption`, `ucinewgame`, `position fen`,
//! `go depth N` / `go movetime M`, `quit`. Inbound: `uciok`, `readyok`,
//! `info ... score (cp|mate) X ...`, `bestmove <move>`. Everything else is
//! ignored. The last score seen before `bestmove` is the search result.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::{Analysis, CentipawnScore, Oracle, OracleError, OracleLimits};
use crate::chess::{Board, MoveCode};

/// Score carried by an `info` line, if any. `info string` lines never count.
pub fn parse_info_score(line: &str) -> Option<CentipawnScore> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("info") {
        return None;
    }
    let rest: Vec<&str> = tokens.collect();
    if rest.first() == Some(&"string") {
        return None;
    }
    let at = rest.iter().position(|&t| t == "score")?;
    let value: i32 = rest.get(at + 2)?.parse().ok()?;
    match *rest.get(at + 1)? {
        "cp" => Some(CentipawnScore::cp(value)),
        "mate" => Some(CentipawnScore::mate(value)),
        _ => None,
    }
}

/// `Some(Some(move))` for `bestmove <move>`, `Some(None)` for
/// `bestmove (none)` / `bestmove 0000`, `None` for any other line.
pub fn parse_bestmove(line: &str) -> Option<Option<String>> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("bestmove") {
        return None;
    }
    match tokens.next() {
        None | Some("(none)") | Some("0000") => Some(None),
        Some(mv) => Some(Some(mv.to_string())),
    }
}

#[derive(Clone, Debug)]
pub struct UciOptions {
    pub args: Vec<String>,
    pub handshake_timeout: Duration,
    /// Wall-clock bound for `go depth` searches.
    pub depth_timeout: Duration,
    /// `go movetime M` must answer within `M * factor + 1s`.
    pub movetime_safety_factor: f64,
    pub setoptions: Vec<(String, String)>,
}

impl Default for UciOptions {
    fn default() -> UciOptions {
        UciOptions {
            args: Vec::new(),
            handshake_timeout: Duration::from_millis(5000),
            depth_timeout: Duration::from_secs(60),
            movetime_safety_factor: 3.0,
            setoptions: Vec::new(),
        }
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Session {
    fn send(&mut self, command: &str) -> Result<(), OracleError> {
        debug!(">> {command}");
        writeln!(self.stdin, "{command}").and_then(|_| self.stdin.flush()).map_err(|e| {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                OracleError::Closed
            } else {
                OracleError::Io(e)
            }
        })
    }

    /// Reads lines until `accept` returns `Some`, or the deadline passes.
    fn read_until<T>(
        &mut self,
        expected: &'static str,
        timeout: Duration,
        mut accept: impl FnMut(&str) -> Option<T>,
    ) -> Result<T, OracleError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => {
                    debug!("<< {line}");
                    if let Some(v) = accept(&line) {
                        return Ok(v);
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(OracleError::Timeout { expected, waited_ms: timeout.as_millis() as u64 })
                }
                Err(RecvTimeoutError::Disconnected) => return Err(OracleError::Closed),
            }
        }
    }

    fn shutdown(mut self) {
        let _ = self.send("quit");
        let deadline = Instant::now() + Duration::from_millis(200);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One engine subprocess with a strictly sequential command/response cycle.
pub struct UciEngine {
    path: PathBuf,
    options: UciOptions,
    session: Option<Session>,
    name: String,
    restarts: u32,
}

impl UciEngine {
    /// Spawns the engine and completes the `uci`/`uciok`, `isready`/`readyok`
    /// handshake.
    pub fn spawn(path: impl AsRef<Path>, options: UciOptions) -> Result<UciEngine, OracleError> {
        let mut engine = UciEngine {
            path: path.as_ref().to_path_buf(),
            options,
            session: None,
            name: String::new(),
            restarts: 0,
        };
        engine.start()?;
        Ok(engine)
    }

    fn start(&mut self) -> Result<(), OracleError> {
        let mut child = Command::new(&self.path)
            .args(&self.options.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| OracleError::Spawn { path: self.path.display().to_string(), source })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session = Session { child, stdin, lines: rx };
        let timeout = self.options.handshake_timeout;
        let result = (|| {
            session.send("uci")?;
            let mut name = String::new();
            session.read_until("uciok", timeout, |line| {
                if let Some(n) = line.strip_prefix("id name ") {
                    name = n.trim().to_string();
                }
                (line.trim() == "uciok").then_some(())
            })?;
            for (k, v) in &self.options.setoptions {
                session.send(&format!("setoption name {k} value {v}"))?;
            }
            session.send("isready")?;
            session.read_until("readyok", timeout, |line| (line.trim() == "readyok").then_some(()))?;
            Ok(name)
        })();
        match result {
            Ok(name) => {
                self.name = if name.is_empty() { self.path.display().to_string() } else { name };
                self.session = Some(session);
                Ok(())
            }
            Err(e) => {
                session.shutdown();
                Err(e)
            }
        }
    }

    fn session(&mut self) -> Result<&mut Session, OracleError> {
        self.session.as_mut().ok_or(OracleError::Closed)
    }

    pub fn is_ready(&mut self) -> Result<(), OracleError> {
        let timeout = self.options.handshake_timeout;
        let s = self.session()?;
        s.send("isready")?;
        s.read_until("readyok", timeout, |line| (line.trim() == "readyok").then_some(()))
    }

    /// Number of automatic restarts performed so far.
    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    fn search_timeout(&self, limits: &OracleLimits) -> Duration {
        match *limits {
            OracleLimits::Depth(_) => self.options.depth_timeout,
            OracleLimits::MoveTime(ms) => {
                Duration::from_millis((ms as f64 * self.options.movetime_safety_factor) as u64 + 1000)
            }
        }
    }

    fn query(&mut self, board: &Board, limits: &OracleLimits) -> Result<Analysis, OracleError> {
        let timeout = self.search_timeout(limits);
        let s = self.session()?;
        s.send(&format!("position fen {}", board.to_fen()))?;
        s.send(&limits.go_command())?;
        let mut score = None;
        let best = s.read_until("bestmove", timeout, |line| {
            if let Some(sc) = parse_info_score(line) {
                score = Some(sc);
            }
            parse_bestmove(line)
        })?;
        let best = match best {
            None => None,
            Some(text) => Some(
                MoveCode::from_uci(&text)
                    .map_err(|_| OracleError::IllegalBestMove { mv: text.clone(), fen: board.to_fen() })?,
            ),
        };
        let score = score.ok_or_else(|| OracleError::Protocol("bestmove arrived without a score".into()))?;
        Ok(Analysis { score, best })
    }

    fn restart(&mut self) -> Result<(), OracleError> {
        if let Some(s) = self.session.take() {
            s.shutdown();
        }
        self.restarts += 1;
        self.start()
    }
}

impl Oracle for UciEngine {
    fn analyse(&mut self, board: &Board, limits: &OracleLimits) -> Result<Analysis, OracleError> {
        match self.query(board, limits) {
            Err(e) if e.is_session_failure() => {
                warn!("engine session failed ({e}); restarting once");
                self.restart()?;
                self.query(board, limits)
            }
            other => other,
        }
    }

    fn new_game(&mut self) -> Result<(), OracleError> {
        self.session()?.send("ucinewgame")?;
        self.is_ready()
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}

impl Drop for UciEngine {
    fn drop(&mut self) {
        if let Some(s) = self.session.take() {
            s.shutdown();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn info_scores() {
        assert_eq!(parse_info_score("info depth 12 seldepth 15 score cp 34 nodes 1000 pv e2e4").unwrap().value, 34);
        assert_eq!(parse_info_score("info depth 8 score mate 3 pv a1a8").unwrap().value, 9997);
        assert_eq!(parse_info_score("info depth 8 score mate -2").unwrap().value, -9998);
        assert_eq!(parse_info_score("info depth 9 score cp -120 lowerbound").unwrap().value, -120);
        assert_eq!(parse_info_score("info string score cp 500"), None);
        assert_eq!(parse_info_score("info depth 3 nodes 55"), None);
        assert_eq!(parse_info_score("info depth 3 score wdl 1 2 3"), None);
        assert_eq!(parse_info_score("info depth 3 score cp x"), None);
        assert_eq!(parse_info_score("bestmove e2e4"), None);
        assert!(parse_info_score("info score mate 1").unwrap().is_mate_mapped);
    }

    #[test]
    fn bestmove_lines() {
        assert_eq!(parse_bestmove("bestmove e2e4 ponder e7e5"), Some(Some("e2e4".into())));
        assert_eq!(parse_bestmove("bestmove (none)"), Some(None));
        assert_eq!(parse_bestmove("bestmove 0000"), Some(None));
        assert_eq!(parse_bestmove("bestmove"), Some(None));
        assert_eq!(parse_bestmove("info depth 1"), None);
    }

    #[test]
    fn missing_executable_is_a_spawn_error() {
        let err = UciEngine::spawn("/nonexistent/engine", UciOptions::default()).err().unwrap();
        assert!(matches!(err, OracleError::Spawn { .. }));
    }
}
