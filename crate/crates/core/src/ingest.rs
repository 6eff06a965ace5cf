//! PGN import and imitation-learning dataset construction.
//!
//! The PGN subset understood here: tag pairs, SAN movetext, move numbers,
//! result tokens, `{}` and `;` comments, NAGs and `()` variations (the last
//! three are skipped). Games are read one at a time from a buffered stream.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chess::{Board, Color, FenError, MoveCode, SanError};

pub const DATASET_HEADER: &str = "#ogss-policy-dataset v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameResult {
    WhiteWin,
    BlackWin,
    Draw,
    Unknown,
}

impl GameResult {
    fn from_token(token: &str) -> Option<GameResult> {
        match token {
            "1-0" => Some(GameResult::WhiteWin),
            "0-1" => Some(GameResult::BlackWin),
            "1/2-1/2" => Some(GameResult::Draw),
            "*" => Some(GameResult::Unknown),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            GameResult::WhiteWin => "1-0",
            GameResult::BlackWin => "0-1",
            GameResult::Draw => "1/2-1/2",
            GameResult::Unknown => "*",
        }
    }

    pub fn winner(self) -> Option<Color> {
        match self {
            GameResult::WhiteWin => Some(Color::White),
            GameResult::BlackWin => Some(Color::Black),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameRecordRaw {
    /// Zero-based position of the game in its source stream.
    pub index: usize,
    pub tags: BTreeMap<String, String>,
    pub start: Board,
    pub moves: Vec<MoveCode>,
    pub result: GameResult,
    pub ends_in_checkmate: bool,
}

impl GameRecordRaw {
    /// Positions before each move, paired with the move played.
    pub fn replay(&self) -> impl Iterator<Item = (Board, MoveCode)> + '_ {
        let mut board = self.start.clone();
        self.moves.iter().map(move |&m| {
            let before = board.clone();
            board = board.apply_move(m).expect("stored moves were validated on import");
            (before, m)
        })
    }
}

#[derive(Debug, Error)]
pub enum PgnError {
    #[error("game {game}: {message}")]
    Syntax { game: usize, message: String },
    #[error("game {game}: bad FEN tag: {source}")]
    Fen {
        game: usize,
        #[source]
        source: FenError,
    },
    #[error("game {game}, ply {ply}: {source}")]
    San {
        game: usize,
        ply: usize,
        #[source]
        source: SanError,
    },
    #[error("reading PGN: {0}")]
    Io(#[from] std::io::Error),
}

/// Streaming PGN reader yielding one result per game, in file order.
pub struct PgnReader<R> {
    lines: std::io::Lines<R>,
    pending: Option<String>,
    next_index: usize,
    done: bool,
}

pub fn parse_pgn<R: BufRead>(reader: R) -> PgnReader<R> {
    PgnReader { lines: reader.lines(), pending: None, next_index: 0, done: false }
}

#[derive(Default)]
struct Scan {
    tokens: Vec<String>,
    result: Option<GameResult>,
    in_comment: bool,
    depth: u32,
}

impl Scan {
    fn feed_line(&mut self, line: &str) {
        let mut token = String::new();
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            if self.result.is_some() {
                break;
            }
            if self.in_comment {
                if c == '}' {
                    self.in_comment = false;
                }
                continue;
            }
            match c {
                '{' => {
                    self.flush(&mut token);
                    self.in_comment = true;
                }
                ';' => {
                    self.flush(&mut token);
                    break;
                }
                '(' => {
                    self.flush(&mut token);
                    self.depth += 1;
                }
                ')' => {
                    self.flush(&mut token);
                    self.depth = self.depth.saturating_sub(1);
                }
                '$' => {
                    self.flush(&mut token);
                    while chars.peek().is_some_and(|d| d.is_ascii_digit()) {
                        chars.next();
                    }
                }
                c if c.is_whitespace() => self.flush(&mut token),
                c => token.push(c),
            }
        }
        self.flush(&mut token);
    }

    fn flush(&mut self, token: &mut String) {
        if token.is_empty() {
            return;
        }
        let t = std::mem::take(token);
        if self.depth > 0 || self.result.is_some() {
            return;
        }
        if let Some(r) = GameResult::from_token(&t) {
            self.result = Some(r);
            return;
        }
        let trimmed = match t.find(|c: char| !c.is_ascii_digit()) {
            Some(i) if i > 0 && t[i..].starts_with('.') => t[i..].trim_start_matches('.'),
            None => "",
            _ => t.as_str(),
        };
        if !trimmed.is_empty() {
            self.tokens.push(trimmed.to_string());
        }
    }
}

fn parse_tag(line: &str) -> Option<(String, String)> {
    let inner = line.trim().strip_prefix('[')?.strip_suffix(']')?;
    let (key, rest) = inner.split_once(char::is_whitespace)?;
    let value = rest.trim().strip_prefix('"')?.strip_suffix('"')?;
    Some((key.to_string(), value.replace("\\\"", "\"").replace("\\\\", "\\")))
}

impl<R: BufRead> PgnReader<R> {
    fn next_line(&mut self) -> Option<std::io::Result<String>> {
        self.pending.take().map(Ok).or_else(|| self.lines.next())
    }

    fn read_game(&mut self) -> Option<Result<GameRecordRaw, PgnError>> {
        let mut tags = BTreeMap::new();
        let mut scan = Scan::default();
        let mut seen_movetext = false;
        let mut seen_anything = false;
        loop {
            let line = match self.next_line() {
                None => break,
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(line)) => line,
            };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('[') && !scan.in_comment {
                if seen_movetext {
                    self.pending = Some(line);
                    break;
                }
                seen_anything = true;
                if let Some((k, v)) = parse_tag(trimmed) {
                    tags.insert(k, v);
                }
                continue;
            }
            if trimmed.starts_with('%') {
                continue;
            }
            seen_anything = true;
            seen_movetext = true;
            scan.feed_line(&line);
            if scan.result.is_some() {
                break;
            }
        }
        if !seen_anything {
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;
        Some(build_game(index, tags, scan))
    }
}

fn build_game(index: usize, tags: BTreeMap<String, String>, scan: Scan) -> Result<GameRecordRaw, PgnError> {
    let start = match tags.get("FEN") {
        Some(fen) => Board::from_fen(fen).map_err(|source| PgnError::Fen { game: index, source })?,
        None => Board::startpos(),
    };
    let mut board = start.clone();
    let mut moves = Vec::with_capacity(scan.tokens.len());
    for (i, san) in scan.tokens.iter().enumerate() {
        let mv = board
            .parse_san(san)
            .map_err(|source| PgnError::San { game: index, ply: i + 1, source })?;
        board = board.make_unchecked(mv);
        moves.push(mv);
    }
    let tagged = tags
        .get("Result")
        .and_then(|r| GameResult::from_token(r))
        .unwrap_or(GameResult::Unknown);
    let mut result = scan.result.unwrap_or(tagged);
    let ends_in_checkmate = board.is_checkmate();
    if ends_in_checkmate {
        let by_board = match board.side_to_move() {
            Color::White => GameResult::BlackWin,
            Color::Black => GameResult::WhiteWin,
        };
        if result != by_board {
            warn!("game {index}: result {} contradicts the final checkmate", result.token());
            result = by_board;
        }
    }
    Ok(GameRecordRaw { index, tags, start, moves, result, ends_in_checkmate })
}

impl<R: BufRead> Iterator for PgnReader<R> {
    type Item = Result<GameRecordRaw, PgnError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let game = self.read_game();
        if game.is_none() {
            self.done = true;
        }
        game
    }
}

/// Exports moves from `start` as PGN movetext with the given tags.
pub fn write_pgn_game(
    out: &mut impl Write,
    tags: &[(&str, String)],
    start: &Board,
    moves: &[MoveCode],
    result: GameResult,
) -> std::io::Result<()> {
    for (k, v) in tags {
        writeln!(out, "[{k} \"{}\"]", v.replace('\\', "\\\\").replace('"', "\\\""))?;
    }
    writeln!(out)?;
    let mut board = start.clone();
    let mut text = String::new();
    for (i, &m) in moves.iter().enumerate() {
        if board.side_to_move() == Color::White {
            text.push_str(&format!("{}. ", board.fullmove_number()));
        } else if i == 0 {
            text.push_str(&format!("{}... ", board.fullmove_number()));
        }
        text.push_str(&board.to_san(m));
        text.push(' ');
        board = board.apply_move(m).map_err(std::io::Error::other)?;
    }
    text.push_str(result.token());
    let mut line_len = 0;
    for word in text.split(' ') {
        if line_len > 0 && line_len + word.len() + 1 > 79 {
            writeln!(out)?;
            line_len = 0;
        } else if line_len > 0 {
            write!(out, " ")?;
            line_len += 1;
        }
        write!(out, "{word}")?;
        line_len += word.len();
    }
    writeln!(out)?;
    writeln!(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub board: Board,
    pub mv: MoveCode,
    pub source: String,
    pub game: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyDataset {
    pub samples: Vec<PolicySample>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no qualifying games: dataset is empty")]
    Empty,
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl PolicyDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, board: Board, mv: MoveCode, source: &str, game: usize) {
        debug_assert!(board.is_legal(mv));
        self.samples.push(PolicySample { board, mv, source: source.to_string(), game });
    }

    /// Newline-delimited records `fen \t uci \t source \t game` after a
    /// versioned header line.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{DATASET_HEADER}")?;
        for s in &self.samples {
            let source: String = s.source.chars().map(|c| if c == '\t' || c == '\n' { ' ' } else { c }).collect();
            writeln!(out, "{}\t{}\t{}\t{}", s.board.to_fen(), s.mv, source, s.game)?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<PolicyDataset, DatasetError> {
        let mut lines = input.lines();
        match lines.next().transpose()? {
            Some(h) if h.trim_end() == DATASET_HEADER => {}
            other => {
                return Err(DatasetError::Format {
                    line: 1,
                    message: format!("expected header {DATASET_HEADER:?}, found {other:?}"),
                })
            }
        }
        let mut ds = PolicyDataset::default();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| DatasetError::Format { line: lineno, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let board = Board::from_fen(fields[0]).map_err(|e| bad(e.to_string()))?;
            let mv = MoveCode::from_uci(fields[1]).map_err(|e| bad(e.to_string()))?;
            if !board.is_legal(mv) {
                return Err(bad(format!("move {mv} is illegal in its position")));
            }
            let game = fields[3].parse().map_err(|_| bad(format!("bad game index {:?}", fields[3])))?;
            ds.samples.push(PolicySample { board, mv, source: fields[2].to_string(), game });
        }
        Ok(ds)
    }
}

/// Keeps the first `limit` games that end in checkmate and emits their
/// (position, move) pairs; with `winner_only` only the winner's moves.
pub fn build_policy_dataset(
    games: impl IntoIterator<Item = GameRecordRaw>,
    source: &str,
    limit: usize,
    winner_only: bool,
) -> Result<PolicyDataset, DatasetError> {
    assert!(limit > 0, "limit must be positive");
    let mut ds = PolicyDataset::default();
    for game in games.into_iter().filter(|g| g.ends_in_checkmate).take(limit) {
        let winner = game.result.winner();
        for (board, mv) in game.replay() {
            if winner_only && Some(board.side_to_move()) != winner {
                continue;
            }
            ds.push(board, mv, source, game.index);
        }
    }
    if ds.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(ds)
}

/// Deterministic shuffle-and-split; `|train| = round(fraction * N)`.
pub fn split_dataset(ds: &PolicyDataset, fraction: f64, seed: u64) -> (PolicyDataset, PolicyDataset) {
    assert!(fraction > 0.0 && fraction < 1.0, "fraction must lie in (0, 1)");
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == n {
        warn!("split of {n} samples at fraction {fraction} leaves the validation set empty");
    }
    let pick = |idx: &[usize]| PolicyDataset { samples: idx.iter().map(|&i| ds.samples[i].clone()).collect() };
    (pick(&order[..n_train]), pick(&order[n_train..]))
}
