use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::blunder::{BlunderArch, BlunderModel};
use super::layers::{bce_with_logit, bce_with_logit_grad, cross_entropy, cross_entropy_grad, sigmoid, softmax, softmax_mse, softmax_mse_grad};
use super::metrics::{accuracy, auc};
use super::policy::{PolicyArch, PolicyModel};
use super::{ModelError, Network};
use crate::chess::{encode_board, encode_metadata, encode_move};
use crate::ingest::PolicyDataset;
use crate::learning::BlunderDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyLoss {
    #[default]
    CrossEntropy,
    /// Squared error between each head's softmax and the one-hot label.
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Global L2 norm the summed gradient is clipped to.
    pub clip_norm: Option<f64>,
    pub momentum: f64,
    pub policy_loss: PolicyLoss,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            clip_norm: Some(5.0),
            momentum: 0.9,
            policy_loss: PolicyLoss::CrossEntropy,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be at least 1".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(ModelError::Config("clip norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ModelError::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    momentum: f64,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new<N: Network<f32>>(cfg: &TrainingConfig, net: &N) -> Optimizer {
        let zeros = || net.params().iter().map(|t| vec![0.0f32; t.len()]).collect::<Vec<_>>();
        let (m, v) = match cfg.optimizer {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::SgdMomentum => (zeros(), Vec::new()),
            OptimizerKind::Adam => (zeros(), zeros()),
        };
        Optimizer { kind: cfg.optimizer, lr: cfg.learning_rate, momentum: cfg.momentum, step: 0, m, v }
    }

    fn apply<N: Network<f32>>(&mut self, net: &mut N, grad: &N) {
        self.step += 1;
        let lr = self.lr;
        let bc1 = 1.0 - Self::BETA1.powi(self.step);
        let bc2 = 1.0 - Self::BETA2.powi(self.step);
        for (ti, (p, g)) in net.params_mut().into_iter().zip(grad.params()).enumerate() {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &d) in p.iter_mut().zip(g) {
                        *w = (*w as f64 - lr * d as f64) as f32;
                    }
                }
                OptimizerKind::SgdMomentum => {
                    for ((w, &d), m) in p.iter_mut().zip(g).zip(self.m[ti].iter_mut()) {
                        let vel = self.momentum * *m as f64 + d as f64;
                        *m = vel as f32;
                        *w = (*w as f64 - lr * vel) as f32;
                    }
                }
                OptimizerKind::Adam => {
                    for (((w, &d), m), v) in p.iter_mut().zip(g).zip(self.m[ti].iter_mut()).zip(self.v[ti].iter_mut()) {
                        let d = d as f64;
                        let mm = Self::BETA1 * *m as f64 + (1.0 - Self::BETA1) * d;
                        let vv = Self::BETA2 * *v as f64 + (1.0 - Self::BETA2) * d * d;
                        *m = mm as f32;
                        *v = vv as f32;
                        *w = (*w as f64 - lr * (mm / bc1) / ((vv / bc2).sqrt() + Self::EPS)) as f32;
                    }
                }
            }
        }
    }
}

/// Samples per gradient work unit. Fixed, so the reduction order and hence
/// the summed gradient do not depend on the thread count.
const CHUNK: usize = 8;

/// Mini-batch descent over `n` samples. `sample` accumulates one sample's
/// gradient and returns its loss. Returns the mean pre-update loss per epoch.
fn fit<N, F>(net: &mut N, n: usize, cfg: &TrainingConfig, rng: &mut ChaCha8Rng, sample: F) -> Result<Vec<f64>, ModelError>
where
    N: Network<f32>,
    F: Fn(&N, usize, &mut N) -> f64 + Sync,
{
    cfg.validate()?;
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let mut opt = Optimizer::new(cfg, net);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut losses = vec![0.0f64; n];
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let parts: Vec<(N, Vec<(usize, f64)>)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut g = net.zeros_like();
                    let l = chunk.iter().map(|&i| (i, sample(net, i, &mut g))).collect();
                    (g, l)
                })
                .collect();
            let mut parts = parts.into_iter();
            let (mut grad, first) = parts.next().expect("batch is non-empty");
            let mut batch_loss = 0.0;
            for (i, l) in first {
                losses[i] = l;
                batch_loss += l;
            }
            for (g, ls) in parts {
                grad.add_assign(&g);
                for (i, l) in ls {
                    losses[i] = l;
                    batch_loss += l;
                }
            }
            grad.scale(1.0 / batch.len() as f32);
            let norm = grad.sq_norm().sqrt();
            if !batch_loss.is_finite() || !norm.is_finite() {
                return Err(ModelError::NonFinite { epoch, batch: batch_idx, grad_norm: norm });
            }
            if let Some(c) = cfg.clip_norm {
                if norm > c {
                    grad.scale((c / norm) as f32);
                }
            }
            opt.apply(net, &grad);
        }
        let mean = losses.iter().sum::<f64>() / n as f64;
        info!("epoch {}/{}: loss {mean:.6}", epoch + 1, cfg.epochs);
        curve.push(mean);
    }
    Ok(curve)
}

fn policy_sample(net: &PolicyModel, ds: &PolicyDataset, loss: PolicyLoss, i: usize, grad: &mut PolicyModel) -> f64 {
    let s = &ds.samples[i];
    let input = encode_board(&s.board);
    let labels = [s.mv.from.index(), s.mv.to.index(), s.mv.promotion.index()];
    let tr = net.trace(input.as_slice());
    let mut total = 0.0;
    let mut gl: [Vec<f32>; 3] = Default::default();
    for h in 0..3 {
        let probs = softmax(&tr.logits[h]);
        match loss {
            PolicyLoss::CrossEntropy => {
                total += cross_entropy(&tr.logits[h], labels[h]) as f64;
                gl[h] = cross_entropy_grad(&probs, labels[h]);
            }
            PolicyLoss::Mse => {
                total += softmax_mse(&probs, labels[h]) as f64;
                gl[h] = softmax_mse_grad(&probs, labels[h]);
            }
        }
    }
    net.backward(input.as_slice(), &tr, [&gl[0], &gl[1], &gl[2]], grad);
    total
}

/// Trains a freshly initialised policy on (position, move) pairs, minimising
/// the summed loss of the three heads. Returns the model and per-epoch loss.
pub fn train_policy(ds: &PolicyDataset, arch: PolicyArch, cfg: &TrainingConfig) -> Result<(PolicyModel, Vec<f64>), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = PolicyModel::new(arch, &mut rng);
    fit_policy(model, ds, cfg, &mut rng)
}

/// Continues training from existing weights.
pub fn train_policy_from(model: PolicyModel, ds: &PolicyDataset, cfg: &TrainingConfig) -> Result<(PolicyModel, Vec<f64>), ModelError> {
    fit_policy(model, ds, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

fn fit_policy(
    mut model: PolicyModel,
    ds: &PolicyDataset,
    cfg: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(PolicyModel, Vec<f64>), ModelError> {
    let loss = cfg.policy_loss;
    let curve = fit(&mut model, ds.len(), cfg, rng, |net, i, g| policy_sample(net, ds, loss, i, g))?;
    Ok((model, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlunderTrainReport {
    pub accuracy: f64,
    pub auc: f64,
    pub loss_curve: Vec<f64>,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Stratified split: `fraction` of each class is held out, keeping at least
/// one example of each class on both sides where the class allows it.
fn stratified_split(labels: &[bool], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let mut k = (fraction * idx.len() as f64).round() as usize;
        if fraction > 0.0 && idx.len() >= 2 {
            k = k.clamp(1, idx.len() - 1);
        }
        held.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

pub fn train_blunder(
    ds: &BlunderDataset,
    arch: BlunderArch,
    cfg: &TrainingConfig,
    holdout_fraction: f64,
) -> Result<(BlunderModel, BlunderTrainReport), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    check_classes(ds)?;
    let model = BlunderModel::new(arch, &mut rng);
    fit_blunder(model, ds, cfg, holdout_fraction, &mut rng)
}

pub fn train_blunder_from(
    model: BlunderModel,
    ds: &BlunderDataset,
    cfg: &TrainingConfig,
    holdout_fraction: f64,
) -> Result<(BlunderModel, BlunderTrainReport), ModelError> {
    check_classes(ds)?;
    fit_blunder(model, ds, cfg, holdout_fraction, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

fn check_classes(ds: &BlunderDataset) -> Result<(), ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let pos = ds.examples.iter().filter(|e| e.label).count();
    if pos == 0 {
        return Err(ModelError::SingleClass("negative"));
    }
    if pos == ds.len() {
        return Err(ModelError::SingleClass("positive"));
    }
    Ok(())
}

fn fit_blunder(
    mut model: BlunderModel,
    ds: &BlunderDataset,
    cfg: &TrainingConfig,
    holdout_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(BlunderModel, BlunderTrainReport), ModelError> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(ModelError::Config(format!("holdout fraction {holdout_fraction} must lie in [0, 1)")));
    }
    let labels: Vec<bool> = ds.examples.iter().map(|e| e.label).collect();
    let (train, held) = stratified_split(&labels, holdout_fraction, rng);
    let curve = fit(&mut model, train.len(), cfg, rng, |net, i, g| {
        let e = &ds.examples[train[i]];
        let (board, meta, mv) = (encode_board(&e.board), encode_metadata(&e.board), encode_move(e.mv));
        let (input, tr) = net.trace(board.as_slice(), &meta, &mv);
        let target = if e.label { 1.0 } else { 0.0 };
        net.backward(&input, &tr, bce_with_logit_grad(tr.logit, target), g);
        bce_with_logit(tr.logit, target) as f64
    })?;

    let has_both = |idx: &[usize]| idx.iter().any(|&i| labels[i]) && idx.iter().any(|&i| !labels[i]);
    let eval_idx = if has_both(&held) {
        held.clone()
    } else {
        warn!("held-out split lacks a class; reporting metrics on the training examples");
        train.clone()
    };
    let scores: Vec<f64> = eval_idx
        .iter()
        .map(|&i| {
            let e = &ds.examples[i];
            let (board, meta, mv) = (encode_board(&e.board), encode_metadata(&e.board), encode_move(e.mv));
            let (_, tr) = model.trace(board.as_slice(), &meta, &mv);
            sigmoid(tr.logit) as f64
        })
        .collect();
    let eval_labels: Vec<bool> = eval_idx.iter().map(|&i| labels[i]).collect();
    let report = BlunderTrainReport {
        accuracy: accuracy(&eval_labels, &scores),
        auc: auc(&eval_labels, &scores)?,
        loss_curve: curve,
        train_size: train.len(),
        holdout_size: held.len(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::{Board, MoveCode};
    use crate::ingest::PolicySample;
    use crate::learning::{BlunderExample, Provenance};
    use crate::models::policy_forward;

    const SMALL: PolicyArch = PolicyArch { conv1: 4, conv2: 4, hidden: 16 };

    fn one_sample() -> PolicyDataset {
        PolicyDataset {
            samples: vec![PolicySample {
                board: Board::startpos(),
                mv: MoveCode::from_uci("e2e4").unwrap(),
                source: "t".into(),
                game: 0,
            }],
        }
    }

    fn sgd(lr: f64, epochs: usize) -> TrainingConfig {
        TrainingConfig {
            learning_rate: lr,
            batch_size: 1,
            epochs,
            optimizer: OptimizerKind::Sgd,
            clip_norm: None,
            ..TrainingConfig::default()
        }
    }

    fn argmax(v: &[f32]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a))).unwrap()
    }

    #[test]
    fn single_pair_converges() {
        let ds = one_sample();
        let (model, curve) = train_policy(&ds, SMALL, &sgd(0.01, 200)).unwrap();
        let heads = policy_forward(&model, &encode_board(&Board::startpos())).unwrap();
        let final_loss: f64 = [(&heads.from, 12), (&heads.to, 28), (&heads.promo, 0)]
            .iter()
            .map(|(h, l)| -(h[*l] as f64).ln())
            .sum();
        assert!(final_loss < 0.1, "final loss {final_loss}, curve tail {:?}", &curve[190..]);
        assert_eq!((argmax(&heads.from), argmax(&heads.to), argmax(&heads.promo)), (12, 28, 0));
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let (_, curve) = train_policy(&one_sample(), SMALL, &sgd(0.0, 5)).unwrap();
        assert!(curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn small_sgd_steps_never_increase_loss() {
        let (_, curve) = train_policy(&one_sample(), SMALL, &sgd(1e-3, 30)).unwrap();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]), "{curve:?}");
    }

    #[test]
    fn same_seed_same_weights() {
        let mut ds = one_sample();
        ds.samples.push(PolicySample { mv: MoveCode::from_uci("d2d4").unwrap(), ..ds.samples[0].clone() });
        let cfg = TrainingConfig { epochs: 3, batch_size: 2, ..TrainingConfig::default() };
        let (a, ca) = train_policy(&ds, SMALL, &cfg).unwrap();
        let (b, cb) = train_policy(&ds, SMALL, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(train_policy(&PolicyDataset::default(), SMALL, &TrainingConfig::default()).is_err());
        let cfg = TrainingConfig { batch_size: 0, ..TrainingConfig::default() };
        assert!(matches!(train_policy(&one_sample(), SMALL, &cfg), Err(ModelError::Config(_))));
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostics() {
        let cfg = TrainingConfig { learning_rate: 1e300, optimizer: OptimizerKind::Sgd, clip_norm: None, epochs: 5, ..TrainingConfig::default() };
        match train_policy(&one_sample(), SMALL, &cfg) {
            Err(ModelError::NonFinite { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 0)),
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    fn marker_dataset(n: usize) -> BlunderDataset {
        // Positives carry a white queen on a1 as a marker; negatives do not.
        let pairs = [
            ("4k3/8/8/8/8/8/8/Q3K3", "4k3/8/8/8/8/8/8/4K3"),
            ("1k6/8/8/8/8/8/8/Q6K", "1k6/8/8/8/8/8/8/7K"),
            ("6k1/8/8/8/8/8/1K6/Q7", "6k1/8/8/8/8/8/1K6/8"),
            ("3k4/8/8/8/8/8/8/Q2K4", "3k4/8/8/8/8/8/8/3K4"),
        ];
        let examples = (0..n)
            .map(|i| {
                let (pos, neg) = pairs[(i / 2) % pairs.len()];
                let positive = i % 2 == 0;
                let board = Board::from_fen(&format!("{} w - - 0 1", if positive { pos } else { neg })).unwrap();
                let mv = board.legal_moves()[0];
                BlunderExample { board, mv, label: positive, provenance: Provenance::default() }
            })
            .collect();
        BlunderDataset { examples }
    }

    #[test]
    fn separable_blunder_set_is_learned() {
        let ds = marker_dataset(64);
        let arch = BlunderArch { conv1: 4, conv2: 4, dense: vec![8, 8, 4], affine: true, move_planes: false };
        let cfg = TrainingConfig { learning_rate: 3e-3, batch_size: 8, epochs: 30, ..TrainingConfig::default() };
        let (_, report) = train_blunder(&ds, arch.clone(), &cfg, 0.25).unwrap();
        assert!(report.auc > 0.95, "{report:?}");
        let (_, again) = train_blunder(&ds, arch, &cfg, 0.25).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn single_class_blunder_set_is_an_error() {
        let mut ds = marker_dataset(8);
        ds.examples.retain(|e| e.label);
        let err = train_blunder(&ds, BlunderArch::reference(), &TrainingConfig::default(), 0.25).unwrap_err();
        assert!(matches!(err, ModelError::SingleClass(_)));
    }
}
