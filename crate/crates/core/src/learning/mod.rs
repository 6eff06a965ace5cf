//! Exploration games against an oracle, blunder datasets and dataset
//! aggregation rounds.

mod archive;
pub(crate) mod dataset;
mod game;
mod round;

pub use archive::{read_archive, write_archive, write_archive_pgn};
pub use dataset::{build_blunder_dataset, correction_pairs, BlunderDataset, BlunderExample, Provenance};
pub use game::{
    agent_color, agent_move, game_seed, play_game, random_opening, GameRecord, GameSetup, Outcome, PlyRecord, Risk,
    DEFAULT_MAX_PLIES,
};
pub use round::{
    aggregate_corrections, check_complete, run_games, safedagger_round, write_round_artifacts, LearningError,
    OracleFactory, RiskSource, RoundConfig, RoundOutput,
};
