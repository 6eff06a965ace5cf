use rand::Rng;

use super::layers::{relu, relu_backward, ChannelAffine, Conv3x3, SPATIAL};
use super::Scalar;

/// Two 3x3 convolutions, each followed by an optional per-channel affine
/// and a ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct Trunk<T> {
    pub conv1: Conv3x3<T>,
    pub affine1: Option<ChannelAffine<T>>,
    pub conv2: Conv3x3<T>,
    pub affine2: Option<ChannelAffine<T>>,
}

pub struct TrunkTrace<T> {
    c1: Vec<T>,
    p1: Vec<T>,
    a1: Vec<T>,
    c2: Vec<T>,
    p2: Vec<T>,
    pub features: Vec<T>,
}

impl<T: Scalar> TrunkTrace<T> {
    #[cfg(test)]
    pub(crate) fn active(&self) -> Vec<bool> {
        self.p1.iter().chain(&self.p2).map(|&x| x > T::zero()).collect()
    }
}

impl<T: Scalar> Trunk<T> {
    pub fn init<R: Rng>(planes: usize, c1: usize, c2: usize, affine: bool, rng: &mut R) -> Self {
        Trunk {
            conv1: Conv3x3::init(planes, c1, rng),
            affine1: affine.then(|| ChannelAffine::identity(c1)),
            conv2: Conv3x3::init(c1, c2, rng),
            affine2: affine.then(|| ChannelAffine::identity(c2)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Trunk {
            conv1: Conv3x3::zeros(self.conv1.in_ch, self.conv1.out_ch),
            affine1: self.affine1.as_ref().map(|a| ChannelAffine::zeros(a.channels)),
            conv2: Conv3x3::zeros(self.conv2.in_ch, self.conv2.out_ch),
            affine2: self.affine2.as_ref().map(|a| ChannelAffine::zeros(a.channels)),
        }
    }

    pub fn input_len(&self) -> usize {
        self.conv1.in_ch * SPATIAL
    }

    pub fn output_len(&self) -> usize {
        self.conv2.out_ch * SPATIAL
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        self.trace(input).features
    }

    pub fn trace(&self, input: &[T]) -> TrunkTrace<T> {
        let c1 = self.conv1.forward(input);
        let p1 = match &self.affine1 {
            Some(a) => a.forward(&c1),
            None => c1.clone(),
        };
        let a1 = relu(&p1);
        let c2 = self.conv2.forward(&a1);
        let p2 = match &self.affine2 {
            Some(a) => a.forward(&c2),
            None => c2.clone(),
        };
        let features = relu(&p2);
        TrunkTrace { c1, p1, a1, c2, p2, features }
    }

    pub fn backward(&self, input: &[T], tr: &TrunkTrace<T>, grad_features: &[T], grad: &mut Self) {
        let mut g = relu_backward(&tr.p2, grad_features);
        if let (Some(a), Some(ga)) = (&self.affine2, grad.affine2.as_mut()) {
            let mut gc = vec![T::zero(); g.len()];
            a.backward(&tr.c2, &g, ga, Some(&mut gc));
            g = gc;
        }
        let mut g1 = vec![T::zero(); tr.a1.len()];
        self.conv2.backward(&tr.a1, &g, &mut grad.conv2, Some(&mut g1));
        let mut g = relu_backward(&tr.p1, &g1);
        if let (Some(a), Some(ga)) = (&self.affine1, grad.affine1.as_mut()) {
            let mut gc = vec![T::zero(); g.len()];
            a.backward(&tr.c1, &g, ga, Some(&mut gc));
            g = gc;
        }
        self.conv1.backward(input, &g, &mut grad.conv1, None);
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = vec![&self.conv1.weight, &self.conv1.bias];
        if let Some(a) = &self.affine1 {
            out.extend([a.scale.as_slice(), a.shift.as_slice()]);
        }
        out.extend([self.conv2.weight.as_slice(), self.conv2.bias.as_slice()]);
        if let Some(a) = &self.affine2 {
            out.extend([a.scale.as_slice(), a.shift.as_slice()]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![&mut self.conv1.weight, &mut self.conv1.bias];
        if let Some(a) = &mut self.affine1 {
            out.extend([a.scale.as_mut_slice(), a.shift.as_mut_slice()]);
        }
        out.extend([self.conv2.weight.as_mut_slice(), self.conv2.bias.as_mut_slice()]);
        if let Some(a) = &mut self.affine2 {
            out.extend([a.scale.as_mut_slice(), a.shift.as_mut_slice()]);
        }
        out
    }

    pub fn named_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let conv = |name: &str, c: &Conv3x3<T>| {
            vec![
                (format!("trunk.{name}.weight"), vec![c.out_ch, c.in_ch, 3, 3]),
                (format!("trunk.{name}.bias"), vec![c.out_ch]),
            ]
        };
        let affine = |name: &str, a: &Option<ChannelAffine<T>>| match a {
            Some(a) => vec![
                (format!("trunk.{name}.scale"), vec![a.channels]),
                (format!("trunk.{name}.shift"), vec![a.channels]),
            ],
            None => vec![],
        };
        let mut out = conv("conv1", &self.conv1);
        out.extend(affine("affine1", &self.affine1));
        out.extend(conv("conv2", &self.conv2));
        out.extend(affine("affine2", &self.affine2));
        out
    }
}
