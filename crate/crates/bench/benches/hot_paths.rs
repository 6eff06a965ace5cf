use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ogss::chess::{encode_board, perft, Board};
use ogss::models::{move_confidences, policy_forward, BlunderArch, BlunderModel, PolicyArch, PolicyModel, RiskScorer};
use ogss::oracle::{evaluate, mock_oracle, OracleLimits};
use ogss::selection::{select, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KIWIPETE: &str = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1";

fn movegen(c: &mut Criterion) {
    let start = Board::startpos();
    let kiwi = Board::from_fen(KIWIPETE).unwrap();
    c.bench_function("perft startpos d3", |b| b.iter(|| perft(black_box(&start), 3)));
    c.bench_function("perft kiwipete d2", |b| b.iter(|| perft(black_box(&kiwi), 2)));
    c.bench_function("legal moves kiwipete", |b| b.iter(|| black_box(&kiwi).legal_moves()));
}

fn inference(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let policy = PolicyModel::new(PolicyArch::REFERENCE, &mut rng);
    let blunder = BlunderModel::new(BlunderArch::reference(), &mut rng);
    let board = Board::from_fen(KIWIPETE).unwrap();
    let planes = encode_board(&board);
    let legal = board.legal_moves();
    c.bench_function("policy forward (reference)", |b| b.iter(|| policy_forward(&policy, black_box(&planes)).unwrap()));
    c.bench_function("blunder risk, all legal moves (reference)", |b| {
        b.iter(|| {
            let scorer = RiskScorer::new(&blunder, &board);
            legal.iter().map(|&m| scorer.risk(m)).sum::<f64>()
        })
    });
    let mut oracle = mock_oracle();
    c.bench_function("mock oracle evaluate", |b| {
        b.iter(|| evaluate(&mut oracle, black_box(&board), &OracleLimits::Depth(1)).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let policy = PolicyModel::new(PolicyArch { conv1: 8, conv2: 8, hidden: 64 }, &mut rng);
    let board = Board::from_fen(KIWIPETE).unwrap();
    let heads = policy_forward(&policy, &encode_board(&board)).unwrap();
    let conf = move_confidences(&heads, &board.legal_moves());
    let risk_of = |m: ogss::chess::MoveCode| ((m.from.index() * 7 + m.to.index()) % 10) as f64 / 10.0;
    for strategy in [
        Strategy::TopK { k: 5 },
        Strategy::Temperature { tau: 1.0 },
        Strategy::OgssElimination { delta: 0.3 },
        Strategy::OgssUtility { alpha: 0.6 },
        Strategy::OgssTopKShield { k: 5 },
    ] {
        c.bench_function(&format!("select {strategy}"), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut risk = risk_of;
            b.iter(|| select(&strategy, black_box(&conf), Some(&mut risk), &mut rng).unwrap())
        });
    }
}

criterion_group!(benches, movegen, inference, selection);
criterion_main!(benches);
