//! Run configuration: one flat TOML table. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use ogss::eval::{RiskChoice, StrategyParams};
use ogss::models::{BlunderArch, OptimizerKind, PolicyArch, PolicyLoss, TrainingConfig};
use ogss::oracle::OracleLimits;
use ogss::selection::Strategy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT_VERSION: u32 = 1;
pub const ENGINE_ENV: &str = "OGSS_ENGINE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub format_version: u32,

    // paths
    pub run_dir: PathBuf,
    pub engine_path: Option<PathBuf>,
    pub engine_args: Vec<String>,
    pub pgn_files: Vec<PathBuf>,

    // oracle
    pub mock_oracle: bool,
    pub label_limit: String,
    pub opponent_limit: String,
    pub risk_limit: String,
    pub engine_timeout_ms: u64,
    pub engine_threads: Option<u32>,

    // run
    pub seed: u64,
    pub jobs: usize,
    pub max_plies: usize,
    pub opening_plies: usize,

    // ingest
    pub ingest_limit: usize,
    pub winner_only: bool,
    pub train_fraction: f64,

    // policy model
    pub policy_conv1: usize,
    pub policy_conv2: usize,
    pub policy_hidden: usize,
    pub policy_loss: PolicyLoss,
    pub policy_learning_rate: f64,
    pub policy_batch_size: usize,
    pub policy_epochs: usize,

    // blunder model
    pub blunder_conv1: usize,
    pub blunder_conv2: usize,
    pub blunder_dense: Vec<usize>,
    pub blunder_affine: bool,
    pub blunder_move_planes: bool,
    pub blunder_learning_rate: f64,
    pub blunder_batch_size: usize,
    pub blunder_epochs: usize,
    pub holdout_fraction: f64,

    // shared optimiser settings
    pub optimizer: OptimizerKind,
    pub clip_norm: Option<f64>,
    pub momentum: f64,

    // exploration
    pub explore_rounds: u32,
    pub explore_games: usize,
    pub explore_strategy: String,
    pub retrain_epochs: usize,

    // evaluation
    pub eval_games: usize,
    pub eval_methods: Vec<String>,
    pub top_k: usize,
    pub temperature: f64,
    pub entropy_bits: f64,
    pub pruning_threshold: f64,
    pub delta: f64,
    pub alpha: f64,
    pub sweep_alphas: Vec<f64>,
    pub sweep_risk: RiskChoice,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = StrategyParams::default();
        let train = TrainingConfig::default();
        let blunder = BlunderArch::reference();
        RunConfig {
            format_version: FORMAT_VERSION,
            run_dir: PathBuf::from("run"),
            engine_path: None,
            engine_args: Vec::new(),
            pgn_files: Vec::new(),
            mock_oracle: false,
            label_limit: "depth:8".into(),
            opponent_limit: "depth:6".into(),
            risk_limit: "depth:8".into(),
            engine_timeout_ms: 60_000,
            engine_threads: None,
            seed: 0,
            jobs: 1,
            max_plies: ogss::learning::DEFAULT_MAX_PLIES,
            opening_plies: 4,
            ingest_limit: 10_000,
            winner_only: false,
            train_fraction: 0.9,
            policy_conv1: PolicyArch::REFERENCE.conv1,
            policy_conv2: PolicyArch::REFERENCE.conv2,
            policy_hidden: PolicyArch::REFERENCE.hidden,
            policy_loss: PolicyLoss::CrossEntropy,
            policy_learning_rate: train.learning_rate,
            policy_batch_size: train.batch_size,
            policy_epochs: train.epochs,
            blunder_conv1: blunder.conv1,
            blunder_conv2: blunder.conv2,
            blunder_dense: blunder.dense,
            blunder_affine: blunder.affine,
            blunder_move_planes: blunder.move_planes,
            blunder_learning_rate: train.learning_rate,
            blunder_batch_size: train.batch_size,
            blunder_epochs: train.epochs,
            holdout_fraction: 0.2,
            optimizer: train.optimizer,
            clip_norm: train.clip_norm,
            momentum: train.momentum,
            explore_rounds: 1,
            explore_games: 200,
            explore_strategy: "top-k:5".into(),
            retrain_epochs: 2,
            eval_games: 50,
            eval_methods: Vec::new(),
            top_k: p.k,
            temperature: p.tau,
            entropy_bits: p.bits,
            pruning_threshold: p.pruning_threshold,
            delta: p.delta,
            alpha: p.alpha,
            sweep_alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sweep_risk: RiskChoice::Model,
        }
    }
}

/// `depth:N` or `movetime:MS`.
pub fn parse_limits(text: &str) -> Result<OracleLimits, String> {
    let (kind, value) = text.split_once(':').ok_or_else(|| format!("bad oracle limit {text:?}"))?;
    let limits = match kind.trim() {
        "depth" => OracleLimits::Depth(value.trim().parse().map_err(|_| format!("bad depth in {text:?}"))?),
        "movetime" => OracleLimits::MoveTime(value.trim().parse().map_err(|_| format!("bad movetime in {text:?}"))?),
        _ => return Err(format!("oracle limit {text:?} must be depth:N or movetime:MS")),
    };
    limits.validate().map_err(|e| e.to_string())?;
    Ok(limits)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// `OGSS_ENGINE` replaces the configured engine path when set.
    pub fn apply_env(&mut self) {
        if let Some(p) = std::env::var_os(ENGINE_ENV).filter(|p| !p.is_empty()) {
            self.engine_path = Some(PathBuf::from(p));
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!("format_version {} is not supported (expected {FORMAT_VERSION})", self.format_version));
        }
        for l in [&self.label_limit, &self.opponent_limit, &self.risk_limit] {
            parse_limits(l)?;
        }
        if !self.mock_oracle {
            if let Some(p) = &self.engine_path {
                if p.components().count() > 1 && !p.exists() {
                    return Err(format!("engine_path {} does not exist", p.display()));
                }
            }
        }
        for p in &self.pgn_files {
            if !p.exists() {
                return Err(format!("pgn file {} does not exist", p.display()));
            }
        }
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(format!("{name} must lie in (0, 1), got {v}"))
            }
        };
        frac("train_fraction", self.train_fraction)?;
        frac("holdout_fraction", self.holdout_fraction)?;
        if self.jobs == 0 || self.ingest_limit == 0 || self.max_plies == 0 {
            return Err("jobs, ingest_limit and max_plies must be positive".into());
        }
        if self.eval_games < 2 {
            return Err("eval_games must be at least 2".into());
        }
        self.explore_strategy()?;
        for m in &self.eval_methods {
            self.strategy(m.strip_prefix("safedagger+").unwrap_or(m))?;
        }
        if self.sweep_alphas.iter().any(|a| !(0.0..=1.0).contains(a)) || self.sweep_alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err("sweep_alphas must be strictly increasing within [0, 1]".into());
        }
        self.policy_training().validate().map_err(|e| e.to_string())?;
        self.blunder_training().validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn limits(&self) -> (OracleLimits, OracleLimits, OracleLimits) {
        let p = |s: &str| parse_limits(s).expect("validated");
        (p(&self.label_limit), p(&self.opponent_limit), p(&self.risk_limit))
    }

    pub fn params(&self) -> StrategyParams {
        StrategyParams {
            k: self.top_k,
            tau: self.temperature,
            bits: self.entropy_bits,
            pruning_threshold: self.pruning_threshold,
            delta: self.delta,
            alpha: self.alpha,
        }
    }

    /// A strategy by name. A bare name takes its parameter from the
    /// configured strategy parameters; `name:value` overrides it.
    pub fn strategy(&self, text: &str) -> Result<Strategy, String> {
        let p = self.params();
        let full = if text.contains(':') {
            text.to_string()
        } else {
            match text {
                "top-k" | "ogss-topk-shield" => format!("{text}:{}", p.k),
                "temperature" => format!("{text}:{}", p.tau),
                "entropy-filter" => format!("{text}:{}", p.bits),
                "action-pruning" => format!("{text}:{}", p.pruning_threshold),
                "ogss-elimination" => format!("{text}:{}", p.delta),
                "ogss-utility" => format!("{text}:{}", p.alpha),
                _ => text.to_string(),
            }
        };
        full.parse().map_err(|e: ogss::selection::SelectionError| e.to_string())
    }

    pub fn explore_strategy(&self) -> Result<Strategy, String> {
        self.strategy(&self.explore_strategy)
    }

    pub fn policy_arch(&self) -> PolicyArch {
        PolicyArch { conv1: self.policy_conv1, conv2: self.policy_conv2, hidden: self.policy_hidden }
    }

    pub fn blunder_arch(&self) -> BlunderArch {
        BlunderArch {
            conv1: self.blunder_conv1,
            conv2: self.blunder_conv2,
            dense: self.blunder_dense.clone(),
            affine: self.blunder_affine,
            move_planes: self.blunder_move_planes,
        }
    }

    fn training(&self, learning_rate: f64, batch_size: usize, epochs: usize) -> TrainingConfig {
        TrainingConfig {
            learning_rate,
            batch_size,
            epochs,
            seed: self.seed,
            optimizer: self.optimizer,
            clip_norm: self.clip_norm,
            momentum: self.momentum,
            policy_loss: self.policy_loss,
        }
    }

    pub fn policy_training(&self) -> TrainingConfig {
        self.training(self.policy_learning_rate, self.policy_batch_size, self.policy_epochs)
    }

    pub fn retrain_training(&self) -> TrainingConfig {
        self.training(self.policy_learning_rate, self.policy_batch_size, self.retrain_epochs)
    }

    pub fn blunder_training(&self) -> TrainingConfig {
        self.training(self.blunder_learning_rate, self.blunder_batch_size, self.blunder_epochs)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical TOML form, leaving out settings that cannot
    /// change results (output location and parallelism).
    pub fn fingerprint(&self) -> String {
        let canonical = RunConfig { run_dir: PathBuf::new(), jobs: 1, ..self.clone() };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig { mock_oracle: true, ..RunConfig::default() };
        c.validate().unwrap();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
        assert_eq!(c.fingerprint().len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("seed = 3\nsede = 4\n").unwrap_err();
        assert!(err.contains("sede"), "{err}");
        assert_eq!(RunConfig::parse("seed = 3").unwrap().seed, 3);
    }

    #[test]
    fn limits_and_strategies() {
        assert_eq!(parse_limits("depth:8").unwrap(), OracleLimits::Depth(8));
        assert_eq!(parse_limits("movetime:150").unwrap(), OracleLimits::MoveTime(150));
        assert!(parse_limits("nodes:5").is_err());
        assert!(parse_limits("depth:0").is_err());
        let c = RunConfig { alpha: 0.25, ..RunConfig::default() };
        assert_eq!(c.strategy("ogss-utility").unwrap(), Strategy::OgssUtility { alpha: 0.25 });
        assert_eq!(c.strategy("ogss-utility:0.5").unwrap(), Strategy::OgssUtility { alpha: 0.5 });
        assert_eq!(c.strategy("greedy").unwrap(), Strategy::Greedy);
        assert!(c.strategy("nonsense").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        for text in ["format_version = 2", "train_fraction = 1.0", "eval_games = 1", "sweep_alphas = [0.5, 0.25]", "label_limit = \"x\""] {
            assert!(RunConfig::parse(text).unwrap().validate().is_err(), "{text}");
        }
    }
}
