//! Layer primitives with explicit forward and backward passes.
//!
//! Activations are flat slices. Convolutions work on channel-major 8x8 maps
//! (`channel * 64 + rank * 8 + file`) with 3x3 kernels and zero padding.
//! Backward passes accumulate into a gradient value of the same type as the
//! layer, so summing per-sample gradients is just repeated accumulation.

use rand::Rng;

use super::Scalar;

pub const SPATIAL: usize = 64;

fn uniform_init<T: Scalar, R: Rng>(len: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3x3<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `[out][in][3][3]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv3x3<T> {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Conv3x3 { in_ch, out_ch, weight: vec![T::zero(); out_ch * in_ch * 9], bias: vec![T::zero(); out_ch] }
    }

    pub fn init<R: Rng>(in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        Conv3x3 { in_ch, out_ch, weight: uniform_init(out_ch * in_ch * 9, in_ch * 9, rng), bias: vec![T::zero(); out_ch] }
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        debug_assert_eq!(input.len(), self.in_ch * SPATIAL);
        let mut out = vec![T::zero(); self.out_ch * SPATIAL];
        for oc in 0..self.out_ch {
            let plane = &mut out[oc * SPATIAL..(oc + 1) * SPATIAL];
            plane.fill(self.bias[oc]);
            for ic in 0..self.in_ch {
                let w = &self.weight[(oc * self.in_ch + ic) * 9..][..9];
                let x = &input[ic * SPATIAL..(ic + 1) * SPATIAL];
                for (k, &wv) in w.iter().enumerate() {
                    let (dy, dx) = (k as isize / 3 - 1, k as isize % 3 - 1);
                    for y in 0.max(-dy)..8.min(8 - dy) {
                        let src = ((y + dy) * 8) as usize;
                        let dst = (y * 8) as usize;
                        for xx in 0.max(-dx)..8.min(8 - dx) {
                            plane[dst + xx as usize] = plane[dst + xx as usize] + wv * x[src + (xx + dx) as usize];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn backward(&self, input: &[T], grad_out: &[T], grad: &mut Self, mut grad_in: Option<&mut [T]>) {
        for oc in 0..self.out_ch {
            let g = &grad_out[oc * SPATIAL..(oc + 1) * SPATIAL];
            grad.bias[oc] = grad.bias[oc] + g.iter().copied().sum();
            for ic in 0..self.in_ch {
                let base = (oc * self.in_ch + ic) * 9;
                let x = &input[ic * SPATIAL..(ic + 1) * SPATIAL];
                for k in 0..9 {
                    let (dy, dx) = (k as isize / 3 - 1, k as isize % 3 - 1);
                    let wv = self.weight[base + k];
                    let mut acc = T::zero();
                    for y in 0.max(-dy)..8.min(8 - dy) {
                        let src = ((y + dy) * 8) as usize;
                        let dst = (y * 8) as usize;
                        for xx in 0.max(-dx)..8.min(8 - dx) {
                            let gv = g[dst + xx as usize];
                            let si = src + (xx + dx) as usize;
                            acc = acc + gv * x[si];
                            if let Some(gi) = grad_in.as_deref_mut() {
                                gi[ic * SPATIAL + si] = gi[ic * SPATIAL + si] + gv * wv;
                            }
                        }
                    }
                    grad.weight[base + k] = grad.weight[base + k] + acc;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weight: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense { inputs, outputs, weight: uniform_init(inputs * outputs, inputs, rng), bias: vec![T::zero(); outputs] }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }

    pub fn backward(&self, x: &[T], grad_out: &[T], grad: &mut Self, mut grad_in: Option<&mut [T]>) {
        for (o, &g) in grad_out.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad.bias[o] = grad.bias[o] + g;
            let row = o * self.inputs;
            for (gw, &v) in grad.weight[row..row + self.inputs].iter_mut().zip(x) {
                *gw = *gw + g * v;
            }
            if let Some(gi) = grad_in.as_deref_mut() {
                for (gx, &w) in gi.iter_mut().zip(&self.weight[row..row + self.inputs]) {
                    *gx = *gx + g * w;
                }
            }
        }
    }
}

/// Per-channel scale and shift over 8x8 maps; the inference-time form of a
/// batch normalisation layer, trained directly.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAffine<T> {
    pub channels: usize,
    pub scale: Vec<T>,
    pub shift: Vec<T>,
}

impl<T: Scalar> ChannelAffine<T> {
    pub fn identity(channels: usize) -> Self {
        ChannelAffine { channels, scale: vec![T::one(); channels], shift: vec![T::zero(); channels] }
    }

    pub fn zeros(channels: usize) -> Self {
        ChannelAffine { channels, scale: vec![T::zero(); channels], shift: vec![T::zero(); channels] }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        x.chunks_exact(SPATIAL)
            .zip(self.scale.iter().zip(&self.shift))
            .flat_map(|(plane, (&a, &b))| plane.iter().map(move |&v| a * v + b))
            .collect()
    }

    pub fn backward(&self, x: &[T], grad_out: &[T], grad: &mut Self, grad_in: Option<&mut [T]>) {
        for c in 0..self.channels {
            let xs = &x[c * SPATIAL..(c + 1) * SPATIAL];
            let gs = &grad_out[c * SPATIAL..(c + 1) * SPATIAL];
            let (mut ga, mut gb) = (T::zero(), T::zero());
            for (&v, &g) in xs.iter().zip(gs) {
                ga = ga + g * v;
                gb = gb + g;
            }
            grad.scale[c] = grad.scale[c] + ga;
            grad.shift[c] = grad.shift[c] + gb;
        }
        if let Some(gi) = grad_in {
            for c in 0..self.channels {
                let a = self.scale[c];
                for i in c * SPATIAL..(c + 1) * SPATIAL {
                    gi[i] = gi[i] + grad_out[i] * a;
                }
            }
        }
    }
}

pub fn relu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

/// Gradient through ReLU given the pre-activation values.
pub fn relu_backward<T: Scalar>(pre: &[T], grad_out: &[T]) -> Vec<T> {
    pre.iter().zip(grad_out).map(|(&p, &g)| if p > T::zero() { g } else { T::zero() }).collect()
}

/// Max-subtracted softmax: finite for any finite logits.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    lse - logits[label]
}

/// Gradient of [`cross_entropy`] with respect to the logits.
pub fn cross_entropy_grad<T: Scalar>(probs: &[T], label: usize) -> Vec<T> {
    probs.iter().enumerate().map(|(i, &p)| if i == label { p - T::one() } else { p }).collect()
}

/// Squared error between the softmax output and the one-hot label.
pub fn softmax_mse<T: Scalar>(probs: &[T], label: usize) -> T {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let d = if i == label { p - T::one() } else { p };
            d * d
        })
        .sum()
}

/// Gradient of [`softmax_mse`] with respect to the logits.
pub fn softmax_mse_grad<T: Scalar>(probs: &[T], label: usize) -> Vec<T> {
    let two = T::from_f64(2.0);
    let g: Vec<T> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| two * if i == label { p - T::one() } else { p })
        .collect();
    let dot: T = g.iter().zip(probs).map(|(&a, &b)| a * b).sum();
    probs.iter().zip(&g).map(|(&p, &gi)| p * (gi - dot)).collect()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy on a logit, computed without forming the sigmoid.
pub fn bce_with_logit<T: Scalar>(z: T, target: T) -> T {
    z.max(T::zero()) - z * target + (T::one() + (-z.abs()).exp()).ln()
}

pub fn bce_with_logit_grad<T: Scalar>(z: T, target: T) -> T {
    sigmoid(z) - target
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Vector relative error `|a - n| / max(|a| + |n|, tiny)`.
    pub(crate) fn rel_error(a: &[f64], n: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale < 1e-12 {
            0.0
        } else {
            diff / scale
        }
    }

    const H: f64 = 1e-4;

    /// Central differences over every parameter of a network. `loss` returns
    /// the loss and whether the ReLU sign pattern equals the unperturbed one;
    /// coordinates whose perturbation crosses a kink are dropped from both
    /// vectors, and at most 5% may be dropped.
    pub(crate) fn network_differences<N: crate::models::Network<f64>>(
        net: &mut N,
        analytic: &[f64],
        mut loss: impl FnMut(&N) -> (f64, bool),
    ) -> (Vec<f64>, Vec<f64>) {
        let (mut a, mut n) = (Vec::new(), Vec::new());
        let mut flat = 0;
        let mut dropped = 0;
        for ti in 0..net.params().len() {
            for i in 0..net.params()[ti].len() {
                let orig = net.params()[ti][i];
                net.params_mut()[ti][i] = orig + H;
                let (up, same_up) = loss(net);
                net.params_mut()[ti][i] = orig - H;
                let (down, same_down) = loss(net);
                net.params_mut()[ti][i] = orig;
                if same_up && same_down {
                    a.push(analytic[flat]);
                    n.push((up - down) / (2.0 * H));
                } else {
                    dropped += 1;
                }
                flat += 1;
            }
        }
        assert_eq!(flat, analytic.len());
        assert!(dropped * 20 <= flat, "{dropped} of {flat} coordinates crossed a ReLU kink");
        (a, n)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let orig = x[i];
                x[i] = orig + H;
                let up = f(x);
                x[i] = orig - H;
                let down = f(x);
                x[i] = orig;
                (up - down) / (2.0 * H)
            })
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut conv = Conv3x3::<f64>::init(2, 3, &mut rng);
            conv.bias = rand_vec(&mut rng, 3);
            let mut x = rand_vec(&mut rng, 2 * SPATIAL);
            let proj = rand_vec(&mut rng, 3 * SPATIAL);
            let mut g = Conv3x3::zeros(2, 3);
            let mut gx = vec![0.0; x.len()];
            conv.backward(&x, &proj, &mut g, Some(&mut gx));

            let nx = numeric(&mut x, |x| dot(&conv.forward(x), &proj));
            assert!(rel_error(&gx, &nx) < 1e-3);
            let mut w = conv.weight.clone();
            let nw = numeric(&mut w, |w| {
                let c = Conv3x3 { weight: w.to_vec(), ..conv.clone() };
                dot(&c.forward(&x), &proj)
            });
            assert!(rel_error(&g.weight, &nw) < 1e-3);
            let mut b = conv.bias.clone();
            let nb = numeric(&mut b, |b| {
                let c = Conv3x3 { bias: b.to_vec(), ..conv.clone() };
                dot(&c.forward(&x), &proj)
            });
            assert!(rel_error(&g.bias, &nb) < 1e-3);
        }
    }

    #[test]
    fn dense_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let mut d = Dense::<f64>::init(7, 5, &mut rng);
            d.bias = rand_vec(&mut rng, 5);
            let mut x = rand_vec(&mut rng, 7);
            let proj = rand_vec(&mut rng, 5);
            let mut g = Dense::zeros(7, 5);
            let mut gx = vec![0.0; 7];
            d.backward(&x, &proj, &mut g, Some(&mut gx));
            let nx = numeric(&mut x, |x| dot(&d.forward(x), &proj));
            assert!(rel_error(&gx, &nx) < 1e-3);
            let mut w = d.weight.clone();
            let nw = numeric(&mut w, |w| dot(&Dense { weight: w.to_vec(), ..d.clone() }.forward(&x), &proj));
            assert!(rel_error(&g.weight, &nw) < 1e-3);
            let mut b = d.bias.clone();
            let nb = numeric(&mut b, |b| dot(&Dense { bias: b.to_vec(), ..d.clone() }.forward(&x), &proj));
            assert!(rel_error(&g.bias, &nb) < 1e-3);
        }
    }

    #[test]
    fn affine_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = ChannelAffine { channels: 2, scale: rand_vec(&mut rng, 2), shift: rand_vec(&mut rng, 2) };
            let mut x = rand_vec(&mut rng, 2 * SPATIAL);
            let proj = rand_vec(&mut rng, 2 * SPATIAL);
            let mut g = ChannelAffine::zeros(2);
            let mut gx = vec![0.0; x.len()];
            a.backward(&x, &proj, &mut g, Some(&mut gx));
            let nx = numeric(&mut x, |x| dot(&a.forward(x), &proj));
            assert!(rel_error(&gx, &nx) < 1e-3);
            let mut s = a.scale.clone();
            let ns = numeric(&mut s, |s| dot(&ChannelAffine { scale: s.to_vec(), ..a.clone() }.forward(&x), &proj));
            assert!(rel_error(&g.scale, &ns) < 1e-3);
            let mut t = a.shift.clone();
            let nt = numeric(&mut t, |t| dot(&ChannelAffine { shift: t.to_vec(), ..a.clone() }.forward(&x), &proj));
            assert!(rel_error(&g.shift, &nt) < 1e-3);
        }
    }

    #[test]
    fn relu_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            // Keep inputs away from the kink so central differences are valid.
            let mut x: Vec<f64> = rand_vec(&mut rng, 16)
                .into_iter()
                .map(|v| if v.abs() < 0.01 { 0.5 } else { v })
                .collect();
            let proj = rand_vec(&mut rng, 16);
            let g = relu_backward(&x, &proj);
            let n = numeric(&mut x, |x| dot(&relu(x), &proj));
            assert!(rel_error(&g, &n) < 1e-3);
        }
    }

    #[test]
    fn softmax_losses_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..20 {
            let mut z = rand_vec(&mut rng, 6).into_iter().map(|v| 3.0 * v).collect::<Vec<_>>();
            let label = i % 6;
            let g = cross_entropy_grad(&softmax(&z), label);
            let n = numeric(&mut z, |z| cross_entropy(z, label));
            assert!(rel_error(&g, &n) < 1e-3);
            let g = softmax_mse_grad(&softmax(&z), label);
            let n = numeric(&mut z, |z| softmax_mse(&softmax(z), label));
            assert!(rel_error(&g, &n) < 1e-3);
        }
    }

    #[test]
    fn sigmoid_bce_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..20 {
            let mut z = vec![rng.gen_range(-5.0..5.0)];
            let t = (i % 2) as f64;
            let g = vec![bce_with_logit_grad(z[0], t)];
            let n = numeric(&mut z, |z| bce_with_logit(z[0], t));
            assert!(rel_error(&g, &n) < 1e-3);
        }
    }

    #[test]
    fn stable_for_extreme_logits() {
        let z = [1e4f32, -1e4, 0.0, 9999.0];
        assert!(softmax(&z).iter().all(|p| p.is_finite()));
        assert!(cross_entropy(&z, 1).is_finite());
        for v in [1e4f32, -1e4] {
            assert!(sigmoid(v).is_finite());
            assert!(bce_with_logit(v, 1.0).is_finite());
            assert!(bce_with_logit(v, 0.0).is_finite());
        }
    }
}
