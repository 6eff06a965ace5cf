use super::{Board, Color, MoveCode};

pub const BOARD_PLANES: usize = 12;
pub const METADATA_LEN: usize = 5;
pub const MOVE_VECTOR_LEN: usize = 3;

/// 8x8x12 binary occupancy tensor, channels first: entry
/// `plane * 64 + rank * 8 + file`, which is `plane * 64 + square.index()`.
#[derive(Clone, PartialEq, Debug)]
pub struct PieceTensor(pub Box<[f32; BOARD_PLANES * 64]>);

impl PieceTensor {
    pub fn zeros() -> PieceTensor {
        PieceTensor(Box::new([0.0; BOARD_PLANES * 64]))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0[..]
    }

    pub fn plane_sum(&self, plane: usize) -> f32 {
        self.0[plane * 64..(plane + 1) * 64].iter().sum()
    }
}

/// `[WK, WQ, BK, BQ castling, side to move (1 = White)]`.
pub type MetadataVector = [f32; METADATA_LEN];

/// `[from / 63, to / 63, promotion / 4]`.
pub type MoveVector = [f32; MOVE_VECTOR_LEN];

pub fn encode_board(board: &Board) -> PieceTensor {
    let mut t = PieceTensor::zeros();
    for (plane, &bits) in board.by_piece.iter().enumerate() {
        let mut b = bits;
        while b != 0 {
            let sq = b.trailing_zeros() as usize;
            t.0[plane * 64 + sq] = 1.0;
            b &= b - 1;
        }
    }
    t
}

pub fn encode_metadata(board: &Board) -> MetadataVector {
    let [wk, wq, bk, bq] = board.castling_rights();
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    [flag(wk), flag(wq), flag(bk), flag(bq), flag(board.side_to_move() == Color::White)]
}

pub fn encode_move(mv: MoveCode) -> MoveVector {
    [
        mv.from.index() as f32 / 63.0,
        mv.to.index() as f32 / 63.0,
        mv.promotion.index() as f32 / 4.0,
    ]
}
