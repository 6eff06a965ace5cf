use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ogss::chess::{encode_board, perft, Board, MoveCode, STARTPOS_FEN};
use ogss::eval::{
    alpha_sweep, compare, emit_report, standard_methods, Harness, HarnessSettings, MethodReport, MethodSpec, Metric,
    MetricsReport, ReportFormat, RiskChoice,
};
use ogss::ingest::{build_policy_dataset, parse_pgn, split_dataset, PolicyDataset};
use ogss::learning::{safedagger_round, write_archive, write_round_artifacts, BlunderDataset, RoundConfig};
use ogss::models::{
    load_checkpoint, move_confidences, policy_forward, save_checkpoint, train_blunder, train_policy, BlunderModel,
    PolicyModel,
};
use ogss::oracle::{best_move, evaluate, label_move, MaterialOracle, Oracle, OracleError, UciEngine, UciOptions};

use crate::config::RunConfig;
use crate::{CliError, Command};

type Factory = Box<dyn Fn() -> Result<Box<dyn Oracle>, OracleError> + Sync>;

const MATE_IN_ONE_FEN: &str = "6k1/5ppp/8/8/8/8/8/R5K1 w - - 0 1";

struct Layout(PathBuf);

impl Layout {
    fn dir(&self, name: &str) -> Result<PathBuf, CliError> {
        let d = self.0.join(name);
        fs::create_dir_all(&d).map_err(|e| CliError::runtime("cli::create_dir", format!("{}: {e}", d.display())))?;
        Ok(d)
    }

    fn data(&self) -> Result<PathBuf, CliError> {
        self.dir("data")
    }

    fn models(&self) -> Result<PathBuf, CliError> {
        self.dir("models")
    }
}

pub fn apply_overrides(cfg: &mut RunConfig, command: &Command) -> Result<(), CliError> {
    let risk = |text: &Option<String>, slot: &mut RiskChoice| -> Result<(), CliError> {
        match text.as_deref() {
            None => Ok(()),
            Some("model") => Ok(*slot = RiskChoice::Model),
            Some("oracle") => Ok(*slot = RiskChoice::Oracle),
            Some(other) => Err(CliError::usage("config::risk", format!("expected model or oracle, got {other:?}"))),
        }
    };
    match command {
        Command::Ingest { pgn, limit, winner_only } => {
            if !pgn.is_empty() {
                cfg.pgn_files = pgn.clone();
            }
            cfg.ingest_limit = limit.unwrap_or(cfg.ingest_limit);
            cfg.winner_only |= winner_only;
        }
        Command::TrainPolicy { epochs, learning_rate } => {
            cfg.policy_epochs = epochs.unwrap_or(cfg.policy_epochs);
            cfg.policy_learning_rate = learning_rate.unwrap_or(cfg.policy_learning_rate);
        }
        Command::TrainBlunder { epochs, learning_rate } => {
            cfg.blunder_epochs = epochs.unwrap_or(cfg.blunder_epochs);
            cfg.blunder_learning_rate = learning_rate.unwrap_or(cfg.blunder_learning_rate);
        }
        Command::Explore { games, rounds, strategy } => {
            cfg.explore_games = games.unwrap_or(cfg.explore_games);
            cfg.explore_rounds = rounds.unwrap_or(cfg.explore_rounds);
            if let Some(s) = strategy {
                cfg.explore_strategy = s.clone();
            }
        }
        Command::Evaluate { games, strategies, k, tau, bits, threshold, delta, alpha, risk: r } => {
            cfg.eval_games = games.unwrap_or(cfg.eval_games);
            if !strategies.is_empty() {
                cfg.eval_methods = strategies.clone();
            }
            cfg.top_k = k.unwrap_or(cfg.top_k);
            cfg.temperature = tau.unwrap_or(cfg.temperature);
            cfg.entropy_bits = bits.unwrap_or(cfg.entropy_bits);
            cfg.pruning_threshold = threshold.unwrap_or(cfg.pruning_threshold);
            cfg.delta = delta.unwrap_or(cfg.delta);
            cfg.alpha = alpha.unwrap_or(cfg.alpha);
            risk(r, &mut cfg.sweep_risk)?;
        }
        Command::SweepAlpha { alphas, games, risk: r } => {
            if !alphas.is_empty() {
                cfg.sweep_alphas = alphas.clone();
            }
            cfg.eval_games = games.unwrap_or(cfg.eval_games);
            risk(r, &mut cfg.sweep_risk)?;
        }
        Command::Perft { .. } | Command::EngineCheck => {}
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Perft { fen, depth, divide } => run_perft(fen, *depth, *divide),
        Command::EngineCheck => engine_check(cfg),
        Command::Ingest { .. } => ingest(cfg),
        Command::TrainPolicy { .. } => train_policy_cmd(cfg),
        Command::Explore { .. } => explore(cfg),
        Command::TrainBlunder { .. } => train_blunder_cmd(cfg),
        Command::Evaluate { .. } => evaluate_cmd(cfg),
        Command::SweepAlpha { .. } => sweep_cmd(cfg),
    }
}

fn run_perft(fen: &str, depth: u32, divide: bool) -> Result<(), CliError> {
    let fen = if fen == "startpos" { STARTPOS_FEN } else { fen };
    let board = Board::from_fen(fen).map_err(|e| CliError::usage("chess::from_fen", e))?;
    if divide && depth > 0 {
        let mut total = 0;
        for mv in board.legal_moves() {
            let n = perft(&board.apply_move(mv).expect("legal"), depth - 1);
            println!("{mv}: {n}");
            total += n;
        }
        println!();
        println!("{total}");
    } else {
        println!("{}", perft(&board, depth));
    }
    Ok(())
}

fn oracle_factory(cfg: &RunConfig) -> Result<Factory, CliError> {
    if cfg.mock_oracle {
        return Ok(Box::new(|| Ok(Box::new(MaterialOracle::new()) as Box<dyn Oracle>)));
    }
    let path = cfg.engine_path.clone().ok_or_else(|| {
        CliError::usage(
            "oracle::configure",
            "no engine configured: set engine_path, OGSS_ENGINE or --engine, or pass --mock-oracle",
        )
    })?;
    let mut options = UciOptions {
        args: cfg.engine_args.clone(),
        depth_timeout: Duration::from_millis(cfg.engine_timeout_ms),
        ..UciOptions::default()
    };
    if let Some(t) = cfg.engine_threads {
        options.setoptions.push(("Threads".into(), t.to_string()));
    }
    Ok(Box::new(move || Ok(Box::new(UciEngine::spawn(&path, options.clone())?) as Box<dyn Oracle>)))
}

fn engine_identity(factory: &Factory) -> Result<String, CliError> {
    factory().map(|o| o.identity()).map_err(|e| CliError::runtime("oracle::spawn", e))
}

/// Records what a phase is about to run. Contains nothing that varies
/// between identical invocations.
fn write_manifest(cfg: &RunConfig, command: &str, engine: &str) -> Result<(), CliError> {
    let dir = Layout(cfg.run_dir.clone()).dir("manifests")?;
    let (label, opponent, risk) = cfg.limits();
    let canonical = RunConfig { run_dir: PathBuf::new(), ..cfg.clone() };
    let manifest = json!({
        "command": command,
        "format_version": cfg.format_version,
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "engine": engine,
        "limits": { "label": label.go_command(), "opponent": opponent.go_command(), "risk": risk.go_command() },
        "config": canonical,
    });
    let path = dir.join(format!("{command}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n")
        .map_err(|e| CliError::runtime("cli::write_manifest", format!("{}: {e}", path.display())))
}

fn write_text(op: &str, path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::runtime(op, format!("{}: {e}", path.display())))
}

fn write_with(op: &str, path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let err = |e: std::io::Error| CliError::runtime(op, format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(fs::File::create(path).map_err(err)?);
    f(&mut w).and_then(|_| w.flush()).map_err(err)
}

fn read_policy_dataset(path: &Path) -> Result<PolicyDataset, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::runtime("ingest::read_dataset", format!("{}: {e}", path.display())))?;
    PolicyDataset::read_from(BufReader::new(f)).map_err(|e| CliError::runtime("ingest::read_dataset", e))
}

fn load_policy(cfg: &RunConfig, path: &Path) -> Result<PolicyModel, CliError> {
    if path.exists() {
        return load_checkpoint(path).map_err(|e| CliError::runtime("models::load_checkpoint", format!("{}: {e}", path.display())));
    }
    warn!("no policy checkpoint at {}; using an untrained policy seeded from the run seed", path.display());
    Ok(PolicyModel::new(cfg.policy_arch(), &mut ChaCha8Rng::seed_from_u64(cfg.seed)))
}

fn load_blunder(cfg: &RunConfig, path: &Path) -> Result<BlunderModel, CliError> {
    if path.exists() {
        return load_checkpoint(path).map_err(|e| CliError::runtime("models::load_checkpoint", format!("{}: {e}", path.display())));
    }
    warn!("no blunder checkpoint at {}; using an untrained blunder model seeded from the run seed", path.display());
    Ok(BlunderModel::new(cfg.blunder_arch(), &mut ChaCha8Rng::seed_from_u64(cfg.seed)))
}

fn engine_check(cfg: &RunConfig) -> Result<(), CliError> {
    let factory = oracle_factory(cfg)?;
    let mut oracle = factory().map_err(|e| CliError::runtime("oracle::spawn", e))?;
    let (label, _, _) = cfg.limits();
    println!("engine: {}", oracle.identity());
    oracle.new_game().map_err(|e| CliError::runtime("oracle::new_game", e))?;
    let start = Board::startpos();
    let score = evaluate(&mut *oracle, &start, &label).map_err(|e| CliError::runtime("oracle::evaluate", e))?;
    let best = best_move(&mut *oracle, &start, &label).map_err(|e| CliError::runtime("oracle::best_move", e))?;
    println!("startpos: score {} best {best}", score.value);
    let mate = Board::from_fen(MATE_IN_ONE_FEN).expect("valid FEN");
    let score = evaluate(&mut *oracle, &mate, &label).map_err(|e| CliError::runtime("oracle::evaluate", e))?;
    println!("mate-in-one: score {} mate {}", score.value, score.is_mate_mapped);
    let mv = MoveCode::from_uci("e2e4").expect("valid move");
    let l = label_move(&mut *oracle, &start, mv, &label).map_err(|e| CliError::runtime("oracle::label_move", e))?;
    let correction = l.correction.map(|c| c.to_string()).unwrap_or_default();
    println!("label e2e4: drop {} blunder {} correction {correction}", l.drop, l.is_blunder);
    println!("ok");
    Ok(())
}

fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.pgn_files.is_empty() {
        return Err(CliError::usage("ingest::configure", "no PGN files given (--pgn or pgn_files)"));
    }
    write_manifest(cfg, "ingest", "none")?;
    let mut games = Vec::new();
    for path in &cfg.pgn_files {
        let f = fs::File::open(path).map_err(|e| CliError::runtime("ingest::read_pgn", format!("{}: {e}", path.display())))?;
        for game in parse_pgn(BufReader::new(f)) {
            match game {
                Ok(g) => games.push(g),
                Err(e) => warn!("{}: skipping game: {e}", path.display()),
            }
        }
    }
    let source = cfg.pgn_files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
    let n_games = games.len();
    let ds = build_policy_dataset(games, &source, cfg.ingest_limit, cfg.winner_only)
        .map_err(|e| CliError::runtime("ingest::build_policy_dataset", e))?;
    let (train, val) = split_dataset(&ds, cfg.train_fraction, cfg.seed);
    let data = Layout(cfg.run_dir.clone()).data()?;
    write_with("ingest::write_dataset", &data.join("policy_train.txt"), |w| train.write_to(w))?;
    write_with("ingest::write_dataset", &data.join("policy_val.txt"), |w| val.write_to(w))?;
    println!("games read: {n_games}; samples: {} train, {} validation", train.len(), val.len());
    Ok(())
}

/// Share of samples whose label is the policy's top-ranked legal move.
fn top1_accuracy(model: &PolicyModel, ds: &PolicyDataset) -> Option<f64> {
    if ds.is_empty() {
        return None;
    }
    let hits = ds
        .samples
        .iter()
        .filter(|s| {
            let heads = policy_forward(model, &encode_board(&s.board)).expect("input shape");
            move_confidences(&heads, &s.board.legal_moves()).ranked().first().map(|e| e.0) == Some(s.mv)
        })
        .count();
    Some(hits as f64 / ds.len() as f64)
}

fn train_policy_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = Layout(cfg.run_dir.clone());
    let data = layout.data()?;
    let train = read_policy_dataset(&data.join("policy_train.txt"))?;
    let val_path = data.join("policy_val.txt");
    let val = if val_path.exists() { read_policy_dataset(&val_path)? } else { PolicyDataset::default() };
    write_manifest(cfg, "train-policy", "none")?;
    let (model, curve) =
        train_policy(&train, cfg.policy_arch(), &cfg.policy_training()).map_err(|e| CliError::runtime("models::train_policy", e))?;
    let models = layout.models()?;
    save_checkpoint(&model, &models.join("policy.ckpt")).map_err(|e| CliError::runtime("models::save_checkpoint", e))?;
    let report = json!({
        "train_size": train.len(),
        "validation_size": val.len(),
        "loss_curve": curve,
        "validation_top1": top1_accuracy(&model, &val),
    });
    write_text("models::write_report", &models.join("policy_train.json"), &(serde_json::to_string_pretty(&report).unwrap() + "\n"))?;
    println!("final loss {:.4}", curve.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn explore(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = Layout(cfg.run_dir.clone());
    let (data, models) = (layout.data()?, layout.models()?);
    let factory = oracle_factory(cfg)?;
    let engine = engine_identity(&factory)?;
    let mut policy = load_policy(cfg, &models.join("policy.ckpt"))?;
    let train_path = data.join("policy_train.txt");
    let mut aggregate = if train_path.exists() { read_policy_dataset(&train_path)? } else { PolicyDataset::default() };
    let strategy = cfg.explore_strategy().map_err(|e| CliError::usage("selection::parse", e))?;
    let (label, opponent, _) = cfg.limits();
    write_manifest(cfg, "explore", &engine)?;
    let explore_dir = layout.dir("explore")?;
    let mut blunders = BlunderDataset::default();
    for round in 0..cfg.explore_rounds {
        let rc = RoundConfig {
            round,
            games: cfg.explore_games,
            strategy,
            seed: cfg.seed,
            max_plies: cfg.max_plies,
            opening_plies: cfg.opening_plies,
            opponent_limits: opponent,
            label_limits: label,
            training: cfg.retrain_training(),
            jobs: cfg.jobs,
        };
        let out = safedagger_round(&policy, &aggregate, &*factory, &rc).map_err(|e| CliError::runtime("learning::safedagger_round", e))?;
        write_round_artifacts(&explore_dir, &out).map_err(|e| CliError::runtime("learning::write_round_artifacts", e))?;
        println!(
            "round {round}: {} games, {} blunders flagged, aggregate {} pairs",
            out.records.len(),
            out.blunders.positives(),
            out.aggregate.len()
        );
        blunders.merge(&out.blunders);
        policy = out.policy;
        aggregate = out.aggregate;
    }
    write_with("learning::write_blunders", &data.join("blunders.jsonl"), |w| blunders.write_jsonl(w))?;
    write_with("learning::write_aggregate", &data.join("policy_aggregate.txt"), |w| aggregate.write_to(w))?;
    save_checkpoint(&policy, &models.join("policy_retrained.ckpt")).map_err(|e| CliError::runtime("models::save_checkpoint", e))?;
    println!("blunder dataset: {} positives, {} negatives", blunders.positives(), blunders.negatives());
    Ok(())
}

fn train_blunder_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = Layout(cfg.run_dir.clone());
    let path = layout.data()?.join("blunders.jsonl");
    let f = fs::File::open(&path).map_err(|e| CliError::runtime("learning::read_blunders", format!("{}: {e}", path.display())))?;
    let ds = BlunderDataset::read_jsonl(BufReader::new(f)).map_err(|e| CliError::runtime("learning::read_blunders", e))?;
    write_manifest(cfg, "train-blunder", "none")?;
    let (model, report) = train_blunder(&ds, cfg.blunder_arch(), &cfg.blunder_training(), cfg.holdout_fraction)
        .map_err(|e| CliError::runtime("models::train_blunder", e))?;
    let models = layout.models()?;
    save_checkpoint(&model, &models.join("blunder.ckpt")).map_err(|e| CliError::runtime("models::save_checkpoint", e))?;
    write_text(
        "models::write_report",
        &models.join("blunder_report.json"),
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    )?;
    println!("held-out accuracy {:.4}, AUC {:.4}", report.accuracy, report.auc);
    Ok(())
}

fn settings(cfg: &RunConfig) -> HarnessSettings {
    let (label, opponent, risk) = cfg.limits();
    HarnessSettings {
        games: cfg.eval_games,
        seed: cfg.seed,
        max_plies: cfg.max_plies,
        opening_plies: cfg.opening_plies,
        opponent_limits: opponent,
        label_limits: label,
        risk_limits: risk,
        jobs: cfg.jobs,
    }
}

/// `safedagger+<strategy>` plays the retrained policy.
fn method_spec(cfg: &RunConfig, text: &str) -> Result<MethodSpec, CliError> {
    let (retrained, name) = match text.strip_prefix("safedagger+") {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let strategy = cfg.strategy(name).map_err(|e| CliError::usage("selection::parse", e))?;
    let spec = if retrained { MethodSpec::retrained(strategy) } else { MethodSpec::new(strategy) };
    Ok(MethodSpec { risk: cfg.sweep_risk, ..spec })
}

fn file_stem(method: &str) -> String {
    method.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn print_methods(methods: &[MethodReport]) {
    println!("{:<28} {:>18} {:>18} {:>18} {:>18}", "method", "blunder_rate", "good_move_rate", "median_cp_drop", "exploration");
    for m in methods {
        let cell = |metric| {
            let s = m.summary(metric);
            format!("{:.4} ± {:.4}", s.mean, s.half_width)
        };
        println!(
            "{:<28} {:>18} {:>18} {:>18} {:>18}",
            m.method,
            cell(Metric::BlunderRate),
            cell(Metric::GoodMoveRate),
            cell(Metric::MedianCpDrop),
            cell(Metric::ExplorationRatio)
        );
    }
}

fn evaluate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = Layout(cfg.run_dir.clone());
    let models = layout.models()?;
    let factory = oracle_factory(cfg)?;
    let engine = engine_identity(&factory)?;
    let retrained_path = models.join("policy_retrained.ckpt");
    let specs: Vec<MethodSpec> = if cfg.eval_methods.is_empty() {
        standard_methods(&cfg.params(), retrained_path.exists())
            .into_iter()
            .map(|s| MethodSpec { risk: cfg.sweep_risk, ..s })
            .collect()
    } else {
        cfg.eval_methods.iter().map(|m| method_spec(cfg, m)).collect::<Result<_, _>>()?
    };
    let policy = load_policy(cfg, &models.join("policy.ckpt"))?;
    let retrained = if specs.iter().any(|s| s.retrained) { Some(load_policy(cfg, &retrained_path)?) } else { None };
    let needs_model = specs.iter().any(|s| s.strategy.needs_risk() && s.risk == RiskChoice::Model);
    let blunder = if needs_model { Some(load_blunder(cfg, &models.join("blunder.ckpt"))?) } else { None };
    write_manifest(cfg, "evaluate", &engine)?;
    let harness = Harness {
        policy: &policy,
        retrained: retrained.as_ref(),
        blunder: blunder.as_ref(),
        oracles: &*factory,
        settings: settings(cfg),
    };
    let out = layout.dir("eval")?;
    let games_dir = layout.dir("eval/games")?;
    let mut report = MetricsReport { fingerprint: cfg.fingerprint(), ..Default::default() };
    for spec in &specs {
        info!("evaluating {}", spec.name);
        let (records, method) = harness.run_method(spec).map_err(|e| CliError::runtime("eval::run_method", e))?;
        let path = games_dir.join(format!("{}.jsonl", file_stem(&spec.name)));
        write_with("learning::write_archive", &path, |w| write_archive(&records, w))?;
        report.methods.push(method);
    }
    for i in 0..report.methods.len() {
        for j in i + 1..report.methods.len() {
            let c = compare(&report.methods[i], &report.methods[j], Metric::BlunderRate)
                .map_err(|e| CliError::runtime("eval::paired_t_test", e))?;
            report.comparisons.push(c);
        }
    }
    emit_report(&report, &out, &ReportFormat::ALL).map_err(|e| CliError::runtime("eval::emit_report", e))?;
    print_methods(&report.methods);
    println!("reports written to {}", out.display());
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = Layout(cfg.run_dir.clone());
    let models = layout.models()?;
    let factory = oracle_factory(cfg)?;
    let engine = engine_identity(&factory)?;
    let policy = load_policy(cfg, &models.join("policy.ckpt"))?;
    let blunder = match cfg.sweep_risk {
        RiskChoice::Model => Some(load_blunder(cfg, &models.join("blunder.ckpt"))?),
        RiskChoice::Oracle => None,
    };
    write_manifest(cfg, "sweep-alpha", &engine)?;
    let harness = Harness { policy: &policy, retrained: None, blunder: blunder.as_ref(), oracles: &*factory, settings: settings(cfg) };
    let (table, methods) =
        alpha_sweep(&cfg.sweep_alphas, &harness, cfg.sweep_risk).map_err(|e| CliError::runtime("eval::alpha_sweep", e))?;
    let out = layout.dir("sweep")?;
    let report = MetricsReport { fingerprint: cfg.fingerprint(), methods, comparisons: Vec::new(), sweep: Some(table.clone()) };
    emit_report(&report, &out, &ReportFormat::ALL).map_err(|e| CliError::runtime("eval::emit_report", e))?;
    println!("{:>6} {:>22} {:>22}", "alpha", "blunder_pct", "median_cp_drop");
    for r in &table.rows {
        println!(
            "{:>6} {:>22} {:>22}",
            r.alpha,
            format!("{:.2} ± {:.2}", r.blunder_pct.mean, r.blunder_pct.half_width),
            format!("{:.2} ± {:.2}", r.median_cp_drop.mean, r.median_cp_drop.half_width)
        );
    }
    let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into());
    println!("spearman(blunder_pct, alpha) = {}", show(table.spearman_blunder));
    println!("spearman(median_cp_drop, alpha) = {}", show(table.spearman_median_drop));
    Ok(())
}
