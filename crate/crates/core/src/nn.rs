//! Small dense networks with hand-written gradients, Adam, and a
//! tanh-squashed diagonal Gaussian head.
//!
//! Parameters of an [`Mlp`] live in one flat vector, layer by layer, each
//! layer storing its row-major `out x in` weight matrix followed by its bias.
//! Gradients use the same layout, which keeps the optimizer oblivious to
//! network structure.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{IppError, Result};

/// Bounds applied to the learned log standard deviation.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// Keeps the tanh Jacobian term finite at saturation.
pub const SQUASH_EPS: f64 = 1e-6;

/// Multi-layer perceptron: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward`]; `inputs[l]` is the input of layer `l`.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
}

/// Gradient of a scalar loss with respect to every parameter and the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Mlp> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(IppError::Shape(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Mlp { sizes: sizes.to_vec(), params: vec![0.0; n] })
    }

    /// LeCun-normal weights, zero biases; the output layer is scaled by
    /// `output_scale`.
    pub fn new<R: Rng>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes)?;
        let last = net.num_layers() - 1;
        let mut off = 0;
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut std = (1.0 / fan_in as f64).sqrt();
            if l == last {
                std *= output_scale;
            }
            for w in &mut net.params[off..off + fan_in * fan_out] {
                let z: f64 = StandardNormal.sample(rng);
                *w = z * std;
            }
            off += fan_out * (fan_in + 1);
        }
        Ok(net)
    }

    /// Builds a network from sizes and a flat parameter vector.
    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(IppError::ShapeMismatch { expected: net.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(IppError::NumericalFailure("non-finite network parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// (weights, bias) of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.offset(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[off..off + i * o];
        (w, &self.params[off + i * o..off + i * o + o])
    }

    fn offset(&self, l: usize) -> usize {
        self.sizes.windows(2).take(l).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_len() {
            return Err(IppError::ShapeMismatch { expected: self.input_len(), got: input.len() });
        }
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let n_in = self.sizes[l];
            let mut z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(r, &br)| br + w[r * n_in..(r + 1) * n_in].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < self.num_layers() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut x, z));
        }
        Ok((x, ForwardCache { inputs }))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(y, _)| y)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<Gradients> {
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(cache, grad_out, &mut params)?;
        Ok(Gradients { params, input })
    }

    /// Adds parameter gradients into `acc` and returns the input gradient.
    pub fn backward_into(&self, cache: &ForwardCache, grad_out: &[f64], acc: &mut [f64]) -> Result<Vec<f64>> {
        if grad_out.len() != self.output_len() {
            return Err(IppError::ShapeMismatch { expected: self.output_len(), got: grad_out.len() });
        }
        if acc.len() != self.params.len() {
            return Err(IppError::ShapeMismatch { expected: self.params.len(), got: acc.len() });
        }
        if cache.inputs.len() != self.num_layers()
            || cache.inputs.iter().zip(&self.sizes).any(|(x, &n)| x.len() != n)
        {
            return Err(IppError::Shape("forward cache does not match network".into()));
        }
        let mut delta = grad_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let x = &cache.inputs[l];
            let (w, _) = self.layer(l);
            let mut grad_in = vec![0.0; n_in];
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = off + r * n_in;
                for c in 0..n_in {
                    acc[row + c] += d * x[c];
                    grad_in[c] += d * w[r * n_in + c];
                }
                acc[off + n_in * n_out + r] += d;
            }
            if l > 0 {
                // x = tanh(z) of the previous layer
                for (g, a) in grad_in.iter_mut().zip(x) {
                    *g *= 1.0 - a * a;
                }
            }
            delta = grad_in;
        }
        Ok(delta)
    }

    /// Two-line text form: `layers ...` then `params ...`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("layers");
        for n in &self.sizes {
            write!(s, " {n}").unwrap();
        }
        s.push_str("\nparams");
        for p in &self.params {
            write!(s, " {p:?}").unwrap();
        }
        s.push('\n');
        s
    }

    /// Parses the output of [`Mlp::to_text`]; `Display`/`Debug` formatting of
    /// `f64` is shortest-round-trip, so the parse is exact.
    pub fn from_text(layers_line: &str, params_line: &str) -> Result<Mlp> {
        let sizes = parse_tagged::<usize>(layers_line, "layers")?;
        let params = parse_tagged::<f64>(params_line, "params")?;
        Mlp::from_params(&sizes, params).map_err(|e| IppError::Checkpoint(e.to_string()))
    }
}

pub(crate) fn parse_tagged<T: std::str::FromStr>(line: &str, tag: &str) -> Result<Vec<T>> {
    let mut it = line.split_whitespace();
    if it.next() != Some(tag) {
        return Err(IppError::Checkpoint(format!("expected `{tag}` line, got {line:?}")));
    }
    it.map(|t| t.parse::<T>().map_err(|_| IppError::Checkpoint(format!("bad {tag} value {t:?}"))))
        .collect()
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Diagonal Gaussian over pre-squash actions `u`; actions are `tanh(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    /// Pre-squash Gaussian draw.
    pub u: Vec<f64>,
    /// `tanh(u)`, in (-1, 1).
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
}

impl GaussianHead {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(IppError::ShapeMismatch { expected: mean.len(), got: log_std.len() });
        }
        let log_std = log_std.into_iter().map(clamp_log_std).collect();
        Ok(GaussianHead { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> PolicySample {
        let u: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect();
        self.evaluate(u)
    }

    /// Mean action, used for deterministic evaluation.
    pub fn mode(&self) -> PolicySample {
        self.evaluate(self.mean.clone())
    }

    pub fn evaluate(&self, u: Vec<f64>) -> PolicySample {
        let action = u.iter().map(|v| v.tanh()).collect();
        let log_prob = self.log_prob(&u);
        PolicySample { u, action, log_prob, entropy: self.entropy() }
    }

    /// Log density of the squashed action `tanh(u)`.
    pub fn log_prob(&self, u: &[f64]) -> f64 {
        self.gaussian_log_prob(u) - squash_correction(u)
    }

    /// Log density of `u` under the unsquashed Gaussian.
    pub fn gaussian_log_prob(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(&self.mean)
            .zip(&self.log_std)
            .map(|((x, m), ls)| {
                let z = (x - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .sum()
    }

    /// Gradients of `log_prob(u)` with respect to the mean and log_std.
    pub fn log_prob_grad(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gm = Vec::with_capacity(u.len());
        let mut gs = Vec::with_capacity(u.len());
        for ((x, m), ls) in u.iter().zip(&self.mean).zip(&self.log_std) {
            let var = (2.0 * ls).exp();
            let d = x - m;
            gm.push(d / var);
            gs.push(d * d / var - 1.0);
        }
        (gm, gs)
    }

    /// Entropy of the unsquashed Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * crate::special::ln_2pi_e()).sum()
    }
}

/// `sum log(1 - tanh(u)^2 + eps)`.
pub fn squash_correction(u: &[f64]) -> f64 {
    u.iter().map(|v| (1.0 - v.tanh().powi(2) + SQUASH_EPS).ln()).sum()
}

pub fn clamp_log_std(v: f64) -> f64 {
    v.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Samples `head` with a fresh draw; convenience wrapper returning
/// `(action, log_prob, entropy)`.
pub fn gaussian_policy<R: Rng>(head: &GaussianHead, rng: &mut R) -> (Vec<f64>, f64, f64) {
    let s = head.sample(rng);
    (s.action, s.log_prob, s.entropy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn net(seed: u64, sizes: &[usize]) -> Mlp {
        Mlp::new(sizes, 1.0, &mut crate::rng::stream(seed, 0)).unwrap()
    }

    fn random_vec(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, 9);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Naive per-layer matrix products with explicit index arithmetic.
    fn triple_loop(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let sizes = net.layer_sizes();
        let p = net.params();
        let mut off = 0;
        let mut a = x.to_vec();
        for l in 0..sizes.len() - 1 {
            let (ni, no) = (sizes[l], sizes[l + 1]);
            let mut out = vec![0.0; no];
            for r in 0..no {
                let mut s = p[off + ni * no + r];
                for c in 0..ni {
                    s += p[off + r * ni + c] * a[c];
                }
                out[r] = if l + 2 < sizes.len() { s.tanh() } else { s };
            }
            off += no * (ni + 1);
            a = out;
        }
        a
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut n = Mlp::zeros(&[3, 2]).unwrap();
        n.params_mut()[6] = 0.5;
        n.params_mut()[7] = -1.5;
        assert_eq!(n.predict(&[4.0, 5.0, 6.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_layer() {
        let mut n = Mlp::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            n.params_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(n.predict(&[0.1, -2.0, 7.0]).unwrap(), vec![0.1, -2.0, 7.0]);
    }

    #[test]
    fn forward_matches_triple_loop() {
        for seed in 0..5 {
            let n = net(seed, &[7, 64, 64, 4]);
            let x = random_vec(seed, 7);
            let got = n.predict(&x).unwrap();
            for (a, b) in got.iter().zip(triple_loop(&n, &x)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let n = net(0, &[3, 4, 2]);
        assert!(matches!(n.forward(&[1.0]), Err(IppError::ShapeMismatch { expected: 3, got: 1 })));
        let (_, cache) = n.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(n.backward(&cache, &[1.0]).is_err());
        let other = net(0, &[5, 4, 2]);
        let (_, c2) = other.forward(&[0.0; 5]).unwrap();
        assert!(n.backward(&c2, &[1.0, 1.0]).is_err());
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 0]).is_err());
    }

    fn finite_difference(n: &Mlp, x: &[f64], g: &[f64], i: usize) -> f64 {
        let eps = 1e-5;
        let loss = |m: &Mlp| m.predict(x).unwrap().iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        let mut p = n.clone();
        p.params_mut()[i] += eps;
        let up = loss(&p);
        p.params_mut()[i] -= 2.0 * eps;
        (up - loss(&p)) / (2.0 * eps)
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..3 {
            let n = net(seed, &[5, 8, 6, 3]);
            let x = random_vec(seed + 10, 5);
            let g = random_vec(seed + 20, 3);
            let (_, cache) = n.forward(&x).unwrap();
            let grads = n.backward(&cache, &g).unwrap();
            for i in 0..n.params().len() {
                let fd = finite_difference(&n, &x, &g, i);
                let a = grads.params[i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel <= 1e-4, "param {i}: {a} vs {fd}");
            }
            // input gradient
            for j in 0..5 {
                let eps = 1e-5;
                let f = |d: f64| {
                    let mut xx = x.clone();
                    xx[j] += d;
                    n.predict(&xx).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
                };
                let fd = (f(eps) - f(-eps)) / (2.0 * eps);
                assert!((grads.input[j] - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn backward_zero_and_linear() {
        let n = net(4, &[4, 6, 2]);
        let (_, cache) = n.forward(&[0.3, -0.2, 0.9, 0.0]).unwrap();
        let z = n.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(z.params.iter().chain(&z.input).all(|&v| v == 0.0));
        let g1 = n.backward(&cache, &[0.7, -1.1]).unwrap();
        let g2 = n.backward(&cache, &[1.4, -2.2]).unwrap();
        for (a, b) in g1.params.iter().zip(&g2.params) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let n = net(11, &[7, 64, 64, 4]);
        let text = n.to_text();
        let mut lines = text.lines();
        let back = Mlp::from_text(lines.next().unwrap(), lines.next().unwrap()).unwrap();
        assert_eq!(back, n);
        assert!(Mlp::from_text("layers 2 1", "params 1 2").is_err());
        assert!(Mlp::from_text("layers 2 1", "params 1 2 x").is_err());
        assert!(Mlp::from_text("sizes 2 1", "params 1 2 3").is_err());
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![0.5, -1.0];
        let mut opt = Adam::new(2, 0.1);
        opt.step(&mut p, &[0.0, 0.0]);
        assert_eq!(p, vec![0.5, -1.0]);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        let mut p = vec![0.0; 3];
        let mut opt = Adam::new(3, 0.01);
        opt.step(&mut p, &[3.0, -0.2, 1e-3]);
        for (v, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - sign * 0.01).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn adam_minimizes_square() {
        let mut w = vec![1.0];
        let mut opt = Adam::new(1, 0.05);
        for _ in 0..100 {
            let g = [2.0 * w[0]];
            opt.step(&mut w, &g);
        }
        assert!(w[0].abs() < 0.1, "{}", w[0]);
    }

    #[test]
    fn head_clamps_log_std() {
        let h = GaussianHead::new(vec![0.0, 0.0], vec![-9.0, 4.0]).unwrap();
        assert_eq!(h.log_std, vec![LOG_STD_MIN, LOG_STD_MAX]);
        assert!(GaussianHead::new(vec![0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn vanishing_noise_is_deterministic() {
        let h = GaussianHead::new(vec![0.0; 4], vec![LOG_STD_MIN; 4]).unwrap();
        let mut rng = crate::rng::stream(1, 1);
        let mut total = 0.0;
        for _ in 0..100 {
            let (a, _, _) = gaussian_policy(&h, &mut rng);
            assert!(a.iter().all(|v| v.abs() < 0.04));
            total += a.iter().map(|v| v.abs()).sum::<f64>();
        }
        assert!(total / 400.0 < 0.01);
    }

    #[test]
    fn sampled_action_dominates_tail() {
        let h = GaussianHead::new(vec![0.2, -0.4, 0.0, 0.1], vec![-3.0; 4]).unwrap();
        let mut rng = crate::rng::stream(2, 1);
        let s = h.sample(&mut rng);
        for i in 0..4 {
            let mut far = s.u.clone();
            far[i] += 1.0;
            assert!(s.log_prob >= h.log_prob(&far));
        }
    }

    #[test]
    fn log_prob_includes_squash_term() {
        let h = GaussianHead::new(vec![0.3], vec![-0.5]).unwrap();
        let u = 0.8f64;
        let sd = (-0.5f64).exp();
        let gauss = -0.5 * ((u - 0.3) / sd).powi(2) - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
        let want = gauss - (1.0 - u.tanh().powi(2) + SQUASH_EPS).ln();
        assert!((h.log_prob(&[u]) - want).abs() < 1e-12);
        // density of a = tanh(u): p_u(u) / (1 - a^2)
        let a = u.tanh();
        let pa = gauss.exp() / (1.0 - a * a);
        assert!((h.log_prob(&[u]) - pa.ln()).abs() < 1e-5);
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let h = GaussianHead::new(vec![0.3, -0.2], vec![-0.4, 0.1]).unwrap();
        let u = [0.9, -1.3];
        let (gm, gs) = h.log_prob_grad(&u);
        let eps = 1e-6;
        for i in 0..2 {
            let mut a = h.clone();
            let mut b = h.clone();
            a.mean[i] += eps;
            b.mean[i] -= eps;
            assert!((gm[i] - (a.log_prob(&u) - b.log_prob(&u)) / (2.0 * eps)).abs() < 1e-7);
            let mut a = h.clone();
            let mut b = h.clone();
            a.log_std[i] += eps;
            b.log_std[i] -= eps;
            assert!((gs[i] - (a.log_prob(&u) - b.log_prob(&u)) / (2.0 * eps)).abs() < 1e-7);
        }
    }

    #[test]
    fn entropy_of_unit_gaussian() {
        let h = GaussianHead::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        assert!((h.entropy() - 4.0 * 1.4189385332046727).abs() < 1e-12);
    }

    /// Composite Simpson rule for E[tanh(u)], u ~ N(m, s^2).
    fn tanh_expectation(m: f64, s: f64) -> f64 {
        let n = 20_000;
        let (lo, hi) = (m - 10.0 * s, m + 10.0 * s);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| {
            let z = (x - m) / s;
            x.tanh() * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn squashed_mean_matches_quadrature() {
        let h = GaussianHead::new(vec![0.7, -0.3, 0.0, 1.5], vec![0.0, 0.5, -1.0, -0.2]).unwrap();
        let mut rng = crate::rng::stream(5, 5);
        let n = 100_000;
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let s = h.sample(&mut rng);
            for (acc, a) in sums.iter_mut().zip(&s.action) {
                *acc += a;
            }
        }
        for i in 0..4 {
            let want = tanh_expectation(h.mean[i], h.log_std[i].exp());
            assert!((sums[i] / n as f64 - want).abs() < 0.01, "dim {i}");
        }
    }

    #[test]
    fn sampling_deterministic_per_seed() {
        let h = GaussianHead::new(vec![0.1; 4], vec![-0.5; 4]).unwrap();
        let a = h.sample(&mut crate::rng::stream(8, 2));
        let b = h.sample(&mut crate::rng::stream(8, 2));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn actions_stay_inside_open_box(m in -3.0f64..3.0, ls in -5.0f64..1.0, seed in 0u64..1000) {
            let h = GaussianHead::new(vec![m; 4], vec![ls; 4]).unwrap();
            let s = h.sample(&mut crate::rng::stream(seed, 0));
            prop_assert!(s.action.iter().all(|a| a.abs() <= 1.0));
            prop_assert!(s.log_prob.is_finite());
        }
    }
}
