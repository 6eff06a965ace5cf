use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{build_blunder_dataset, correction_pairs, play_game, write_archive, write_archive_pgn};
use super::{BlunderDataset, GameRecord, GameSetup, Outcome, Risk};
use crate::ingest::PolicyDataset;
use crate::models::{save_checkpoint, train_policy_from, BlunderModel, CheckpointError, ModelError, PolicyModel, TrainingConfig};
use crate::oracle::{Oracle, OracleError, OracleLimits};
use crate::selection::Strategy;

/// Builds a fresh oracle handle. Every game owns its own handles.
pub type OracleFactory<'a> = dyn Fn() -> Result<Box<dyn Oracle>, OracleError> + Sync + 'a;

/// Risk source for games run in parallel; oracle risk gets its own handle
/// per game.
#[derive(Clone, Copy)]
pub enum RiskSource<'a> {
    None,
    Model(&'a BlunderModel),
    Oracle(OracleLimits),
}

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("learning::run_games: {0}")]
    Oracle(#[from] OracleError),
    #[error("learning::run_games: game {game} aborted: {error}")]
    Aborted { game: usize, error: String },
    #[error("learning::run_games: {0}")]
    Pool(String),
    #[error("learning::retrain: {0}")]
    Model(#[from] ModelError),
    #[error("learning::write_artifacts: {0}")]
    Io(#[from] io::Error),
    #[error("learning::write_artifacts: {0}")]
    Checkpoint(#[from] CheckpointError),
}

/// Plays every setup with at most `jobs` games in flight. Results come back
/// in setup order regardless of scheduling.
pub fn run_games(
    policy: &PolicyModel,
    strategy: &Strategy,
    risk: RiskSource<'_>,
    oracles: &OracleFactory<'_>,
    setups: &[GameSetup],
    jobs: usize,
) -> Result<Vec<GameRecord>, LearningError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LearningError::Pool(e.to_string()))?;
    pool.install(|| {
        setups
            .par_iter()
            .map(|setup| {
                let mut opponent = oracles()?;
                let mut labeler = oracles()?;
                let mut risk_oracle;
                let mut r = match risk {
                    RiskSource::None => Risk::None,
                    RiskSource::Model(m) => Risk::Model(m),
                    RiskSource::Oracle(limits) => {
                        risk_oracle = oracles()?;
                        Risk::Oracle { oracle: &mut *risk_oracle, limits }
                    }
                };
                Ok(play_game(policy, strategy, &mut r, &mut *opponent, &mut *labeler, setup))
            })
            .collect()
    })
}

/// Fails on the first aborted game.
pub fn check_complete(records: &[GameRecord]) -> Result<(), LearningError> {
    match records.iter().find_map(|r| match &r.outcome {
        Outcome::Aborted { error } => Some((r.index, error.clone())),
        _ => None,
    }) {
        Some((game, error)) => Err(LearningError::Aborted { game, error }),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub round: u32,
    pub games: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub max_plies: usize,
    pub opening_plies: usize,
    pub opponent_limits: OracleLimits,
    pub label_limits: OracleLimits,
    pub training: TrainingConfig,
    pub jobs: usize,
}

impl RoundConfig {
    /// Game setups for this round. Rounds draw disjoint game indices so
    /// their seeds differ.
    pub fn setups(&self) -> Vec<GameSetup> {
        (0..self.games)
            .map(|i| {
                let index = self.round as usize * self.games + i;
                GameSetup {
                    max_plies: self.max_plies,
                    opening_plies: self.opening_plies,
                    opponent_limits: self.opponent_limits,
                    label_limits: self.label_limits,
                    ..GameSetup::new(index, self.seed)
                }
            })
            .collect()
    }
}

pub struct RoundOutput {
    pub round: u32,
    pub records: Vec<GameRecord>,
    pub blunders: BlunderDataset,
    pub aggregate: PolicyDataset,
    /// Pairs added to the aggregate this round.
    pub added: usize,
    pub policy: PolicyModel,
    pub loss_curve: Vec<f64>,
}

/// Appends the correction for every flagged agent ply to `aggregate`.
/// Returns the number of pairs added.
pub fn aggregate_corrections(aggregate: &mut PolicyDataset, records: &[GameRecord], round: u32) -> usize {
    let pairs = correction_pairs(records);
    let source = format!("round-{round}");
    for (board, mv, game) in &pairs {
        aggregate.push(board.clone(), *mv, &source, *game);
    }
    pairs.len()
}

/// One aggregation round: play `cfg.games` exploration games, collect the
/// oracle's blunder flags and corrections, grow the imitation set by the
/// corrections and warm-start retrain the policy on it.
pub fn safedagger_round(
    policy: &PolicyModel,
    aggregate: &PolicyDataset,
    oracles: &OracleFactory<'_>,
    cfg: &RoundConfig,
) -> Result<RoundOutput, LearningError> {
    if cfg.games == 0 {
        return Err(ModelError::Config("a round needs at least one game".into()).into());
    }
    let records = run_games(policy, &cfg.strategy, RiskSource::None, oracles, &cfg.setups(), cfg.jobs)?;
    check_complete(&records)?;
    let blunders = build_blunder_dataset(&records, cfg.round);
    let mut aggregate = aggregate.clone();
    let added = aggregate_corrections(&mut aggregate, &records, cfg.round);
    info!(
        "round {}: {} games, {} blunder examples, {} correction pairs",
        cfg.round,
        records.len(),
        blunders.len(),
        added
    );
    let (policy, loss_curve) = if aggregate.is_empty() {
        warn!("round {}: aggregate is empty, policy left unchanged", cfg.round);
        (policy.clone(), Vec::new())
    } else {
        train_policy_from(policy.clone(), &aggregate, &cfg.training)?
    };
    Ok(RoundOutput { round: cfg.round, records, blunders, aggregate, added, policy, loss_curve })
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes a round's artifacts into `dir/round-NNN/` and returns that path.
pub fn write_round_artifacts(dir: &Path, out: &RoundOutput) -> Result<PathBuf, LearningError> {
    let dir = dir.join(format!("round-{:03}", out.round));
    fs::create_dir_all(&dir)?;
    let mut f = create(&dir.join("games.jsonl"))?;
    write_archive(&out.records, &mut f)?;
    f.flush()?;
    let mut f = create(&dir.join("games.pgn"))?;
    write_archive_pgn(&out.records, &mut f)?;
    f.flush()?;
    let mut f = create(&dir.join("blunders.jsonl"))?;
    out.blunders.write_jsonl(&mut f)?;
    f.flush()?;
    let mut f = create(&dir.join("policy_aggregate.txt"))?;
    out.aggregate.write_to(&mut f)?;
    f.flush()?;
    save_checkpoint(&out.policy, &dir.join("policy.ckpt"))?;
    let summary = serde_json::json!({
        "round": out.round,
        "games": out.records.len(),
        "blunder_positives": out.blunders.positives(),
        "blunder_negatives": out.blunders.negatives(),
        "aggregate_size": out.aggregate.len(),
        "added_pairs": out.added,
        "loss_curve": out.loss_curve,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).map_err(io::Error::other)? + "\n")?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::dataset::tests::synthetic_record;
    use crate::models::PolicyArch;
    use crate::oracle::MaterialOracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mock() -> Result<Box<dyn Oracle>, OracleError> {
        Ok(Box::new(MaterialOracle::new()))
    }

    fn cfg(round: u32) -> RoundConfig {
        RoundConfig {
            round,
            games: 3,
            strategy: Strategy::TopK { k: 5 },
            seed: 11,
            max_plies: 30,
            opening_plies: 2,
            opponent_limits: OracleLimits::Depth(1),
            label_limits: OracleLimits::Depth(1),
            training: TrainingConfig { epochs: 1, batch_size: 16, ..TrainingConfig::default() },
            jobs: 2,
        }
    }

    fn base() -> (PolicyModel, PolicyDataset) {
        let policy = PolicyModel::new(PolicyArch { conv1: 2, conv2: 2, hidden: 4 }, &mut ChaCha8Rng::seed_from_u64(1));
        let mut ds = PolicyDataset::default();
        let b = crate::chess::Board::startpos();
        ds.push(b.clone(), b.legal_moves()[0], "base", 0);
        (policy, ds)
    }

    #[test]
    fn aggregate_grows_by_flagged_count() {
        let (_, mut agg) = base();
        assert_eq!(aggregate_corrections(&mut agg, &[synthetic_record(0, 5, &[])], 0), 0);
        assert_eq!(agg.len(), 1);
        let recs = [synthetic_record(0, 5, &[0, 2]), synthetic_record(1, 5, &[4])];
        assert_eq!(aggregate_corrections(&mut agg, &recs, 0), 3);
        assert_eq!(agg.len(), 4);
    }

    #[test]
    fn parallel_order_matches_serial() {
        let (policy, _) = base();
        let setups = cfg(0).setups();
        let a = run_games(&policy, &Strategy::TopK { k: 3 }, RiskSource::None, &mock, &setups, 1).unwrap();
        let b = run_games(&policy, &Strategy::TopK { k: 3 }, RiskSource::None, &mock, &setups, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn round_is_reproducible() {
        let (policy, agg) = base();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut outputs = Vec::new();
        for d in &dirs {
            let out = safedagger_round(&policy, &agg, &mock, &cfg(1)).unwrap();
            assert_eq!(out.aggregate.len(), agg.len() + out.added);
            assert_eq!(out.added, out.blunders.positives());
            outputs.push(write_round_artifacts(d.path(), &out).unwrap());
        }
        for name in ["games.jsonl", "games.pgn", "blunders.jsonl", "policy_aggregate.txt", "policy.ckpt", "summary.json"] {
            assert_eq!(fs::read(outputs[0].join(name)).unwrap(), fs::read(outputs[1].join(name)).unwrap(), "{name}");
        }
        let text = fs::read_to_string(outputs[0].join("games.jsonl")).unwrap();
        let back = crate::learning::read_archive(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 3);
        for r in &back {
            r.replay().unwrap();
        }
    }
}
