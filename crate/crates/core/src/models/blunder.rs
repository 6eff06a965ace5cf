use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, sigmoid, Conv3x3, Dense, SPATIAL};
use super::trunk::{Trunk, TrunkTrace};
use super::{ModelError, Network, Scalar};
use crate::chess::{
    encode_board, encode_metadata, encode_move, Board, MetadataVector, MoveCode, MoveVector, PieceTensor, BOARD_PLANES,
    METADATA_LEN, MOVE_VECTOR_LEN,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlunderArch {
    pub conv1: usize,
    pub conv2: usize,
    /// Hidden widths of the head, input side first.
    pub dense: Vec<usize>,
    /// Per-channel affine after each convolution.
    pub affine: bool,
    /// Feed the move to the trunk as two extra one-hot planes (from, to) in
    /// addition to the 3-value move vector.
    pub move_planes: bool,
}

impl BlunderArch {
    pub fn reference() -> BlunderArch {
        BlunderArch { conv1: 32, conv2: 64, dense: vec![128, 64, 32], affine: true, move_planes: false }
    }

    pub fn input_planes(&self) -> usize {
        BOARD_PLANES + if self.move_planes { 2 } else { 0 }
    }

    pub fn descriptor(&self) -> String {
        let dense: Vec<String> = self.dense.iter().map(|d| d.to_string()).collect();
        format!(
            "blunder conv1={} conv2={} dense={} norm={} move={}",
            self.conv1,
            self.conv2,
            dense.join(","),
            if self.affine { "affine" } else { "none" },
            if self.move_planes { "planes" } else { "vector" },
        )
    }

    pub fn parse(text: &str) -> Option<BlunderArch> {
        let mut it = text.split_whitespace();
        if it.next()? != "blunder" {
            return None;
        }
        let mut arch = BlunderArch { conv1: 0, conv2: 0, dense: Vec::new(), affine: false, move_planes: false };
        for kv in it {
            let (k, v) = kv.split_once('=')?;
            match k {
                "conv1" => arch.conv1 = v.parse().ok()?,
                "conv2" => arch.conv2 = v.parse().ok()?,
                "dense" => arch.dense = v.split(',').map(|d| d.parse().ok()).collect::<Option<_>>()?,
                "norm" => {
                    arch.affine = match v {
                        "affine" => true,
                        "none" => false,
                        _ => return None,
                    }
                }
                "move" => {
                    arch.move_planes = match v {
                        "planes" => true,
                        "vector" => false,
                        _ => return None,
                    }
                }
                _ => return None,
            }
        }
        (arch.conv1 > 0 && arch.conv2 > 0 && !arch.dense.is_empty() && arch.dense.iter().all(|&d| d > 0)).then_some(arch)
    }
}

impl Default for BlunderArch {
    fn default() -> Self {
        BlunderArch::reference()
    }
}

/// Convolutional trunk over the board, concatenated with the metadata and
/// move vectors, then a dense stack ending in one sigmoid unit.
#[derive(Clone, Debug, PartialEq)]
pub struct BlunderNet<T> {
    pub arch: BlunderArch,
    pub trunk: Trunk<T>,
    pub layers: Vec<Dense<T>>,
    pub out: Dense<T>,
}

pub type BlunderModel = BlunderNet<f32>;

pub(crate) struct BlunderTrace<T> {
    trunk: TrunkTrace<T>,
    /// Input of each dense layer (the first is the fused vector).
    inputs: Vec<Vec<T>>,
    pres: Vec<Vec<T>>,
    pub logit: T,
}

impl<T: Scalar> BlunderTrace<T> {
    #[cfg(test)]
    pub(crate) fn active(&self) -> Vec<bool> {
        let mut v = self.trunk.active();
        for p in &self.pres {
            v.extend(p.iter().map(|&x| x > T::zero()));
        }
        v
    }
}

impl<T: Scalar> BlunderNet<T> {
    pub fn new<R: Rng>(arch: BlunderArch, rng: &mut R) -> Self {
        let trunk = Trunk::init(arch.input_planes(), arch.conv1, arch.conv2, arch.affine, rng);
        let mut width = trunk.output_len() + METADATA_LEN + MOVE_VECTOR_LEN;
        let mut layers = Vec::new();
        for &d in &arch.dense {
            layers.push(Dense::init(width, d, rng));
            width = d;
        }
        BlunderNet { out: Dense::zeros(width, 1), arch, trunk, layers }
    }

    pub fn zeros(arch: BlunderArch) -> Self {
        let trunk = Trunk {
            conv1: Conv3x3::zeros(arch.input_planes(), arch.conv1),
            affine1: arch.affine.then(|| super::layers::ChannelAffine::zeros(arch.conv1)),
            conv2: Conv3x3::zeros(arch.conv1, arch.conv2),
            affine2: arch.affine.then(|| super::layers::ChannelAffine::zeros(arch.conv2)),
        };
        let mut width = trunk.output_len() + METADATA_LEN + MOVE_VECTOR_LEN;
        let mut layers = Vec::new();
        for &d in &arch.dense {
            layers.push(Dense::zeros(width, d));
            width = d;
        }
        BlunderNet { out: Dense::zeros(width, 1), arch, trunk, layers }
    }

    /// Trunk input: the board planes, plus the move planes when configured.
    pub fn trunk_input(&self, board: &[T], mv: &[T]) -> Vec<T> {
        let mut input = board.to_vec();
        if self.arch.move_planes {
            let square = |v: T| (v.as_f64() * 63.0).round().clamp(0.0, 63.0) as usize;
            let mut planes = vec![T::zero(); 2 * SPATIAL];
            planes[square(mv[0])] = T::one();
            planes[SPATIAL + square(mv[1])] = T::one();
            input.extend(planes);
        }
        input
    }

    fn fused(features: &[T], meta: &[T], mv: &[T]) -> Vec<T> {
        let mut x = Vec::with_capacity(features.len() + meta.len() + mv.len());
        x.extend_from_slice(features);
        x.extend_from_slice(meta);
        x.extend_from_slice(mv);
        x
    }

    pub(crate) fn head_trace(&self, trunk: TrunkTrace<T>, meta: &[T], mv: &[T]) -> BlunderTrace<T> {
        let mut x = Self::fused(&trunk.features, meta, mv);
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        for d in &self.layers {
            let pre = d.forward(&x);
            inputs.push(std::mem::replace(&mut x, relu(&pre)));
            pres.push(pre);
        }
        let logit = self.out.forward(&x)[0];
        inputs.push(x);
        BlunderTrace { trunk, inputs, pres, logit }
    }

    pub(crate) fn trace(&self, board: &[T], meta: &[T], mv: &[T]) -> (Vec<T>, BlunderTrace<T>) {
        let input = self.trunk_input(board, mv);
        let trunk = self.trunk.trace(&input);
        let tr = self.head_trace(trunk, meta, mv);
        (input, tr)
    }

    /// Logit from precomputed trunk features.
    pub fn head_logit(&self, features: &[T], meta: &[T], mv: &[T]) -> T {
        let mut x = Self::fused(features, meta, mv);
        for d in &self.layers {
            x = relu(&d.forward(&x));
        }
        self.out.forward(&x)[0]
    }

    pub(crate) fn backward(&self, input: &[T], tr: &BlunderTrace<T>, glogit: T, grad: &mut Self) {
        let n = self.layers.len();
        let mut g = vec![T::zero(); tr.inputs[n].len()];
        self.out.backward(&tr.inputs[n], &[glogit], &mut grad.out, Some(&mut g));
        for i in (0..n).rev() {
            let gpre = relu_backward(&tr.pres[i], &g);
            let mut gx = vec![T::zero(); tr.inputs[i].len()];
            self.layers[i].backward(&tr.inputs[i], &gpre, &mut grad.layers[i], Some(&mut gx));
            g = gx;
        }
        let nf = tr.trunk.features.len();
        self.trunk.backward(input, &tr.trunk, &g[..nf], &mut grad.trunk);
    }

    pub fn forward_slices(&self, board: &[T], meta: &[T], mv: &[T]) -> Result<T, ModelError> {
        let expected = BOARD_PLANES * SPATIAL;
        if board.len() != expected {
            return Err(ModelError::ShapeMismatch { expected, found: board.len() });
        }
        if meta.len() != METADATA_LEN {
            return Err(ModelError::ShapeMismatch { expected: METADATA_LEN, found: meta.len() });
        }
        if mv.len() != MOVE_VECTOR_LEN {
            return Err(ModelError::ShapeMismatch { expected: MOVE_VECTOR_LEN, found: mv.len() });
        }
        let input = self.trunk_input(board, mv);
        if input.len() != self.trunk.input_len() {
            return Err(ModelError::ShapeMismatch { expected: self.trunk.input_len(), found: input.len() });
        }
        let features = self.trunk.forward(&input);
        Ok(sigmoid(self.head_logit(&features, meta, mv)))
    }
}

impl<T: Scalar> Network<T> for BlunderNet<T> {
    fn params(&self) -> Vec<&[T]> {
        let mut out = self.trunk.params();
        for d in self.layers.iter().chain(std::iter::once(&self.out)) {
            out.extend([d.weight.as_slice(), d.bias.as_slice()]);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = self.trunk.params_mut();
        for d in self.layers.iter_mut().chain(std::iter::once(&mut self.out)) {
            out.extend([d.weight.as_mut_slice(), d.bias.as_mut_slice()]);
        }
        out
    }

    fn zeros_like(&self) -> Self {
        BlunderNet::zeros(self.arch.clone())
    }

    fn named_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = self.trunk.named_shapes();
        for (i, d) in self.layers.iter().enumerate() {
            out.push((format!("head.dense{}.weight", i + 1), vec![d.outputs, d.inputs]));
            out.push((format!("head.dense{}.bias", i + 1), vec![d.outputs]));
        }
        out.push(("head.out.weight".into(), vec![1, self.out.inputs]));
        out.push(("head.out.bias".into(), vec![1]));
        out
    }
}

/// Blunder probability of a move, in (0, 1).
pub fn blunder_forward(
    model: &BlunderModel,
    board: &PieceTensor,
    meta: &MetadataVector,
    mv: &MoveVector,
) -> Result<f32, ModelError> {
    model.forward_slices(board.as_slice(), meta, mv)
}

/// Lazily evaluates move risks for one position. The trunk runs once per
/// position unless the model takes the move as input planes; each move is
/// scored at most once.
pub struct RiskScorer<'a> {
    model: &'a BlunderModel,
    board: PieceTensor,
    meta: MetadataVector,
    features: Option<Vec<f32>>,
    cache: RefCell<HashMap<MoveCode, f64>>,
}

impl<'a> RiskScorer<'a> {
    pub fn new(model: &'a BlunderModel, position: &Board) -> RiskScorer<'a> {
        let board = encode_board(position);
        let features = (!model.arch.move_planes).then(|| model.trunk.forward(board.as_slice()));
        RiskScorer { model, board, meta: encode_metadata(position), features, cache: RefCell::new(HashMap::new()) }
    }

    pub fn risk(&self, mv: MoveCode) -> f64 {
        if let Some(&r) = self.cache.borrow().get(&mv) {
            return r;
        }
        let mvec = encode_move(mv);
        let logit = match &self.features {
            Some(f) => self.model.head_logit(f, &self.meta, &mvec),
            None => {
                let input = self.model.trunk_input(self.board.as_slice(), &mvec);
                self.model.head_logit(&self.model.trunk.forward(&input), &self.meta, &mvec)
            }
        };
        let r = sigmoid(logit) as f64;
        self.cache.borrow_mut().insert(mv, r);
        r
    }

    /// Number of distinct moves scored so far.
    pub fn queries(&self) -> usize {
        self.cache.borrow().len()
    }
}
