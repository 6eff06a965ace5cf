use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, softmax, Dense};
use super::trunk::{Trunk, TrunkTrace};
use super::{ModelError, Network, Scalar};
use crate::chess::{MoveCode, PieceTensor, Promotion, BOARD_PLANES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
}

impl PolicyArch {
    pub const REFERENCE: PolicyArch = PolicyArch { conv1: 32, conv2: 64, hidden: 256 };

    pub fn descriptor(&self) -> String {
        format!("policy conv1={} conv2={} hidden={}", self.conv1, self.conv2, self.hidden)
    }

    pub fn parse(text: &str) -> Option<PolicyArch> {
        let mut it = text.split_whitespace();
        if it.next()? != "policy" {
            return None;
        }
        let mut arch = PolicyArch { conv1: 0, conv2: 0, hidden: 0 };
        for kv in it {
            let (k, v) = kv.split_once('=')?;
            let v: usize = v.parse().ok()?;
            match k {
                "conv1" => arch.conv1 = v,
                "conv2" => arch.conv2 = v,
                "hidden" => arch.hidden = v,
                _ => return None,
            }
        }
        (arch.conv1 > 0 && arch.conv2 > 0 && arch.hidden > 0).then_some(arch)
    }
}

impl Default for PolicyArch {
    fn default() -> Self {
        PolicyArch::REFERENCE
    }
}

/// Convolutional trunk, one hidden dense layer, and three independent
/// softmax heads over from-square, to-square and promotion class.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet<T> {
    pub arch: PolicyArch,
    pub trunk: Trunk<T>,
    pub hidden: Dense<T>,
    pub from_head: Dense<T>,
    pub to_head: Dense<T>,
    pub promo_head: Dense<T>,
}

pub type PolicyModel = PolicyNet<f32>;

/// Softmax outputs of the three heads.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyHeads<T> {
    pub from: Vec<T>,
    pub to: Vec<T>,
    pub promo: Vec<T>,
}

pub(crate) struct PolicyTrace<T> {
    trunk: TrunkTrace<T>,
    h_pre: Vec<T>,
    h: Vec<T>,
    pub logits: [Vec<T>; 3],
}

impl<T: Scalar> PolicyTrace<T> {
    /// Sign pattern of every ReLU input.
    #[cfg(test)]
    pub(crate) fn active(&self) -> Vec<bool> {
        let mut v = self.trunk.active();
        v.extend(self.h_pre.iter().map(|&x| x > T::zero()));
        v
    }
}

impl<T: Scalar> PolicyNet<T> {
    /// Hidden layers get fan-in scaled uniform weights; the heads start at
    /// zero so an untrained model predicts uniform distributions.
    pub fn new<R: Rng>(arch: PolicyArch, rng: &mut R) -> Self {
        let trunk = Trunk::init(BOARD_PLANES, arch.conv1, arch.conv2, false, rng);
        let hidden = Dense::init(trunk.output_len(), arch.hidden, rng);
        PolicyNet {
            arch,
            trunk,
            hidden,
            from_head: Dense::zeros(arch.hidden, 64),
            to_head: Dense::zeros(arch.hidden, 64),
            promo_head: Dense::zeros(arch.hidden, Promotion::COUNT),
        }
    }

    pub fn zeros(arch: PolicyArch) -> Self {
        let trunk = Trunk {
            conv1: super::layers::Conv3x3::zeros(BOARD_PLANES, arch.conv1),
            affine1: None,
            conv2: super::layers::Conv3x3::zeros(arch.conv1, arch.conv2),
            affine2: None,
        };
        PolicyNet {
            arch,
            hidden: Dense::zeros(trunk.output_len(), arch.hidden),
            trunk,
            from_head: Dense::zeros(arch.hidden, 64),
            to_head: Dense::zeros(arch.hidden, 64),
            promo_head: Dense::zeros(arch.hidden, Promotion::COUNT),
        }
    }

    pub(crate) fn trace(&self, input: &[T]) -> PolicyTrace<T> {
        let trunk = self.trunk.trace(input);
        let h_pre = self.hidden.forward(&trunk.features);
        let h = relu(&h_pre);
        let logits = [self.from_head.forward(&h), self.to_head.forward(&h), self.promo_head.forward(&h)];
        PolicyTrace { trunk, h_pre, h, logits }
    }

    /// Accumulates parameter gradients for the given logit gradients.
    pub(crate) fn backward(&self, input: &[T], tr: &PolicyTrace<T>, glogits: [&[T]; 3], grad: &mut Self) {
        let mut gh = vec![T::zero(); tr.h.len()];
        self.from_head.backward(&tr.h, glogits[0], &mut grad.from_head, Some(&mut gh));
        self.to_head.backward(&tr.h, glogits[1], &mut grad.to_head, Some(&mut gh));
        self.promo_head.backward(&tr.h, glogits[2], &mut grad.promo_head, Some(&mut gh));
        let gh = relu_backward(&tr.h_pre, &gh);
        let mut gf = vec![T::zero(); tr.trunk.features.len()];
        self.hidden.backward(&tr.trunk.features, &gh, &mut grad.hidden, Some(&mut gf));
        self.trunk.backward(input, &tr.trunk, &gf, &mut grad.trunk);
    }

    pub fn forward_slice(&self, input: &[T]) -> Result<PolicyHeads<T>, ModelError> {
        if input.len() != self.trunk.input_len() {
            return Err(ModelError::ShapeMismatch { expected: self.trunk.input_len(), found: input.len() });
        }
        let [f, t, p] = self.trace(input).logits;
        Ok(PolicyHeads { from: softmax(&f), to: softmax(&t), promo: softmax(&p) })
    }
}

impl<T: Scalar> Network<T> for PolicyNet<T> {
    fn params(&self) -> Vec<&[T]> {
        let mut out = self.trunk.params();
        for d in [&self.hidden, &self.from_head, &self.to_head, &self.promo_head] {
            out.extend([d.weight.as_slice(), d.bias.as_slice()]);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = self.trunk.params_mut();
        for d in [&mut self.hidden, &mut self.from_head, &mut self.to_head, &mut self.promo_head] {
            out.extend([d.weight.as_mut_slice(), d.bias.as_mut_slice()]);
        }
        out
    }

    fn zeros_like(&self) -> Self {
        PolicyNet::zeros(self.arch)
    }

    fn named_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = self.trunk.named_shapes();
        for (name, d) in [
            ("hidden", &self.hidden),
            ("head.from", &self.from_head),
            ("head.to", &self.to_head),
            ("head.promo", &self.promo_head),
        ] {
            out.push((format!("{name}.weight"), vec![d.outputs, d.inputs]));
            out.push((format!("{name}.bias"), vec![d.outputs]));
        }
        out
    }
}

pub fn policy_forward(model: &PolicyModel, board: &PieceTensor) -> Result<PolicyHeads<f32>, ModelError> {
    model.forward_slice(board.as_slice())
}

/// Per-move probabilities over a legal-move set, in canonical move order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    entries: Vec<(MoveCode, f64)>,
}

impl ConfidenceMap {
    /// Normalises non-negative raw scores over the given moves; falls back to
    /// uniform when the total mass is below 1e-12.
    pub fn from_raw(mut raw: Vec<(MoveCode, f64)>) -> ConfidenceMap {
        raw.sort_by_key(|&(m, _)| m);
        raw.dedup_by_key(|&mut (m, _)| m);
        let total: f64 = raw.iter().map(|&(_, r)| r.max(0.0)).sum();
        if !(total >= 1e-12) || !total.is_finite() {
            let u = 1.0 / raw.len().max(1) as f64;
            raw.iter_mut().for_each(|e| e.1 = u);
        } else {
            raw.iter_mut().for_each(|e| e.1 = e.1.max(0.0) / total);
        }
        ConfidenceMap { entries: raw }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(MoveCode, f64)] {
        &self.entries
    }

    pub fn get(&self, mv: MoveCode) -> Option<f64> {
        self.entries.binary_search_by_key(&mv, |&(m, _)| m).ok().map(|i| self.entries[i].1)
    }

    /// Entries by descending confidence, canonical order among equals.
    pub fn ranked(&self) -> Vec<(MoveCode, f64)> {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// Product of the three head probabilities for each legal move, renormalised
/// over the legal set.
pub fn move_confidences<T: Scalar>(heads: &PolicyHeads<T>, legal: &[MoveCode]) -> ConfidenceMap {
    ConfidenceMap::from_raw(
        legal
            .iter()
            .map(|&m| {
                let raw = heads.from[m.from.index()].as_f64()
                    * heads.to[m.to.index()].as_f64()
                    * heads.promo[m.promotion.index()].as_f64();
                (m, raw)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::{encode_board, Board};
    use crate::models::layers::{cross_entropy, cross_entropy_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SMALL: PolicyArch = PolicyArch { conv1: 2, conv2: 3, hidden: 5 };

    fn mv(s: &str) -> MoveCode {
        MoveCode::from_uci(s).unwrap()
    }

    #[test]
    fn fresh_model_is_uniform() {
        let model = PolicyModel::new(SMALL, &mut ChaCha8Rng::seed_from_u64(0));
        let heads = policy_forward(&model, &encode_board(&Board::startpos())).unwrap();
        assert!(heads.from.iter().all(|&p| p == 1.0 / 64.0));
        assert!(heads.to.iter().all(|&p| p == 1.0 / 64.0));
        assert!(heads.promo.iter().all(|&p| p == 0.2));
    }

    #[test]
    fn heads_normalised_and_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = PolicyModel::new(SMALL, &mut rng);
        for p in model.params_mut() {
            p.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
        for _ in 0..100 {
            let mut t = PieceTensor::zeros();
            for v in t.0.iter_mut() {
                *v = rng.gen_range(0..2) as f32;
            }
            let a = policy_forward(&model, &t).unwrap();
            let b = policy_forward(&model, &t).unwrap();
            assert_eq!(a, b);
            for head in [&a.from, &a.to, &a.promo] {
                let s: f64 = head.iter().map(|&p| p as f64).sum();
                assert!((s - 1.0).abs() < 1e-6);
                assert!(head.iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn wrong_input_length_is_a_shape_error() {
        let model = PolicyModel::new(SMALL, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(model.forward_slice(&[0.0; 10]), Err(ModelError::ShapeMismatch { expected: 768, found: 10 })));
    }

    #[test]
    fn confidences_follow_product_rule() {
        let mut heads = PolicyHeads { from: vec![0.0f64; 64], to: vec![0.0; 64], promo: vec![0.0; 5] };
        heads.from[12] = 1.0;
        heads.to[28] = 1.0;
        heads.promo[0] = 1.0;
        let legal = Board::startpos().legal_moves();
        let c = move_confidences(&heads, &legal);
        assert_eq!(c.get(mv("e2e4")), Some(1.0));
        assert_eq!(c.ranked()[0].0, mv("e2e4"));

        let c = ConfidenceMap::from_raw(vec![(mv("a2a3"), 0.3), (mv("b2b3"), 0.1)]);
        assert!((c.get(mv("a2a3")).unwrap() - 0.75).abs() < 1e-12);
        assert!((c.get(mv("b2b3")).unwrap() - 0.25).abs() < 1e-12);

        let zero = PolicyHeads { from: vec![0.0f64; 64], to: vec![0.0; 64], promo: vec![0.0; 5] };
        let c = move_confidences(&zero, &legal);
        assert!(c.entries().iter().all(|&(_, p)| p == 1.0 / 20.0));
    }

    /// Whole-network gradient against central differences of the summed
    /// three-head cross-entropy.
    #[test]
    fn network_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..20 {
            let mut net = PolicyNet::<f64>::new(SMALL, &mut rng);
            for p in net.params_mut() {
                p.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            }
            let input: Vec<f64> = (0..768).map(|_| if rng.gen_range(0..32) == 0 { 1.0 } else { 0.0 }).collect();
            let labels = [case % 64, (case * 7) % 64, case % 5];
            let tr = net.trace(&input);
            let gl: Vec<Vec<f64>> = (0..3).map(|h| cross_entropy_grad(&softmax(&tr.logits[h]), labels[h])).collect();
            let mut grad = net.zeros_like();
            net.backward(&input, &tr, [&gl[0], &gl[1], &gl[2]], &mut grad);

            let analytic: Vec<f64> = grad.params().iter().flat_map(|t| t.iter().copied()).collect();
            let base = tr.active();
            let (a, n) = crate::models::layers::tests::network_differences(&mut net, &analytic, |n| {
                let tr = n.trace(&input);
                let l = (0..3).map(|h| cross_entropy(&tr.logits[h], labels[h])).sum::<f64>();
                (l, tr.active() == base)
            });
            let err = crate::models::layers::tests::rel_error(&a, &n);
            assert!(err < 1e-3, "case {case}: relative error {err}");
        }
    }
}
