use ogss::chess::{perft, Board};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Position after `plies` random legal moves from the initial position
/// (stops early if the game ends).
fn walk(seed: u64, plies: usize) -> Board {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Board::startpos();
    for _ in 0..plies {
        let Some(&mv) = b.legal_moves().choose(&mut rng) else { break };
        b = b.apply_move(mv).unwrap();
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1200, ..ProptestConfig::default() })]

    #[test]
    fn fen_round_trip(seed in any::<u64>(), plies in 0usize..120) {
        let b = walk(seed, plies);
        let fen = b.to_fen();
        let back = Board::from_fen(&fen).unwrap();
        prop_assert_eq!(back.to_fen(), fen);
        prop_assert_eq!(back.legal_moves(), b.legal_moves());
    }

    #[test]
    fn san_round_trip(seed in any::<u64>(), plies in 0usize..80) {
        let b = walk(seed, plies);
        for mv in b.legal_moves() {
            let san = b.to_san(mv);
            prop_assert_eq!(b.parse_san(&san).unwrap(), mv, "{} in {}", san, b.to_fen());
        }
    }

    #[test]
    fn legal_moves_are_canonical_and_safe(seed in any::<u64>(), plies in 0usize..100) {
        let b = walk(seed, plies);
        let legal = b.legal_moves();
        prop_assert!(legal.windows(2).all(|w| w[0] < w[1]));
        for mv in legal {
            let child = b.apply_move(mv).unwrap();
            let king = child.king_square(b.side_to_move()).unwrap();
            prop_assert!(!child.is_attacked(king, child.side_to_move()));
        }
    }
}

#[test]
fn perft_divides_into_children() {
    for seed in 0..20 {
        let b = walk(seed, 10);
        let total: u64 = b.legal_moves().into_iter().map(|m| perft(&b.apply_move(m).unwrap(), 2)).sum();
        assert_eq!(total, perft(&b, 3), "{}", b.to_fen());
    }
}

#[test]
fn malformed_fen_is_rejected() {
    for bad in [
        "",
        "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq -",
        "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP w KQkq - 0 1",
        "rnbqkbnr/pppppppp/9/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1",
        "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR x KQkq - 0 1",
        "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq e9 0 1",
        "8/8/8/8/8/8/8/8 w - - 0 1",
    ] {
        assert!(Board::from_fen(bad).is_err(), "{bad:?}");
    }
}
