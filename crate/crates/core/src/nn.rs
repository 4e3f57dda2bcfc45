//! Small policy/value multilayer perceptron with hand-written backprop and Adam.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Bumped whenever the serialized parameter layout changes.
pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("parameter format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt parameter payload: {0}")]
    CorruptPayload(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_actions: usize,
    /// One trunk feeding both heads, or separate policy and value trunks.
    pub shared_trunk: bool,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, num_actions: usize) -> Self {
        Architecture { input_dim, hidden, num_actions, shared_trunk: true }
    }

    fn trunk_output(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }
}

/// Fully connected layer; `weights` is `rows x cols` row-major with
/// `rows` outputs and `cols` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    /// Orthogonal rows (or columns, whichever is fewer) scaled by `gain`.
    pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Self {
        let mut d = Dense::zeros(rows, cols);
        let transpose = rows > cols;
        let (n, len) = if transpose { (cols, rows) } else { (rows, cols) };
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
        while basis.len() < n {
            let mut v: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
        for (k, b) in basis.iter().enumerate() {
            for (j, &x) in b.iter().enumerate() {
                let (r, c) = if transpose { (j, k) } else { (k, j) };
                d.weights[r * cols + c] = gain * x;
            }
        }
        d
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let w = &self.weights[r * self.cols..(r + 1) * self.cols];
            out.push(self.bias[r] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>());
        }
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `input`.
    fn backward(&self, input: &[f64], upstream: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dinput = vec![0.0; self.cols];
        for r in 0..self.rows {
            let g = upstream[r];
            if g == 0.0 {
                continue;
            }
            grad.bias[r] += g;
            let w = &self.weights[r * self.cols..(r + 1) * self.cols];
            let gw = &mut grad.weights[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                gw[c] += g * input[c];
                dinput[c] += g * w[c];
            }
        }
        dinput
    }

    fn shape_ok(&self) -> bool {
        self.weights.len() == self.rows * self.cols && self.bias.len() == self.rows
    }
}

/// Network parameters. The same type holds gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    pub architecture: Architecture,
    /// Shared trunk, or the policy trunk when trunks are separate.
    pub trunk: Vec<Dense>,
    /// Empty when the trunk is shared.
    pub value_trunk: Vec<Dense>,
    pub policy_head: Dense,
    pub value_head: Dense,
}

pub type GradientSet = MlpParams;

fn trunk_layers(arch: &Architecture, mut make: impl FnMut(usize, usize) -> Dense) -> Vec<Dense> {
    let mut layers = Vec::with_capacity(arch.hidden.len());
    let mut width = arch.input_dim;
    for &h in &arch.hidden {
        layers.push(make(h, width));
        width = h;
    }
    layers
}

impl MlpParams {
    /// Orthogonal initialization: hidden layers with gain √2, the policy head
    /// scaled by 0.01 so the initial policy is near uniform.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let gain = 2.0f64.sqrt();
        let trunk = trunk_layers(arch, |r, c| Dense::orthogonal(r, c, gain, rng));
        let value_trunk = if arch.shared_trunk {
            Vec::new()
        } else {
            trunk_layers(arch, |r, c| Dense::orthogonal(r, c, gain, rng))
        };
        let width = arch.trunk_output();
        let policy_head = Dense::orthogonal(arch.num_actions, width, 0.01, rng);
        let value_head = Dense::orthogonal(1, width, 1.0, rng);
        MlpParams { architecture: arch.clone(), trunk, value_trunk, policy_head, value_head }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.rows, d.cols);
        MlpParams {
            architecture: self.architecture.clone(),
            trunk: self.trunk.iter().map(z).collect(),
            value_trunk: self.value_trunk.iter().map(z).collect(),
            policy_head: z(&self.policy_head),
            value_head: z(&self.value_head),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain(&self.value_trunk).chain([&self.policy_head, &self.value_head])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain(self.value_trunk.iter_mut())
            .chain([&mut self.policy_head, &mut self.value_head])
    }

    /// Flat views of every weight and bias tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers().flat_map(|d| [d.weights.as_slice(), d.bias.as_slice()]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut().flat_map(|d| [d.weights.as_mut_slice(), d.bias.as_mut_slice()]).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Checks that every tensor matches the declared architecture.
    pub fn validate(&self) -> Result<(), NnError> {
        let arch = &self.architecture;
        let bad = |what: &str| Err(NnError::CorruptPayload(format!("{what} does not match architecture")));
        let check_trunk = |layers: &[Dense]| {
            let mut width = arch.input_dim;
            layers.len() == arch.hidden.len()
                && layers.iter().zip(&arch.hidden).all(|(d, &h)| {
                    let ok = d.shape_ok() && d.rows == h && d.cols == width;
                    width = h;
                    ok
                })
        };
        if !check_trunk(&self.trunk) {
            return bad("trunk");
        }
        if arch.shared_trunk {
            if !self.value_trunk.is_empty() {
                return bad("value trunk");
            }
        } else if !check_trunk(&self.value_trunk) {
            return bad("value trunk");
        }
        let width = arch.trunk_output();
        let head_ok = |d: &Dense, rows| d.shape_ok() && d.rows == rows && d.cols == width;
        if !head_ok(&self.policy_head, arch.num_actions) {
            return bad("policy head");
        }
        if !head_ok(&self.value_head, 1) {
            return bad("value head");
        }
        if !self.is_finite() {
            return Err(NnError::CorruptPayload("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Output {
        let cache = self.forward_cached(input);
        Output { logits: cache.logits, value: cache.value }
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        let policy_acts = run_trunk(&self.trunk, input);
        let value_acts = run_trunk(&self.value_trunk, input);
        let policy_feat = policy_acts.last().map_or(input, |v| v.as_slice());
        let value_feat = if self.architecture.shared_trunk {
            policy_feat
        } else {
            value_acts.last().map_or(input, |v| v.as_slice())
        };
        let mut logits = Vec::new();
        self.policy_head.forward(policy_feat, &mut logits);
        let mut v = Vec::new();
        self.value_head.forward(value_feat, &mut v);
        ForwardCache { input: input.to_vec(), policy_acts, value_acts, logits, value: v[0] }
    }

    /// Accumulates into `grads` the gradient of a loss whose derivatives
    /// with respect to the logits and the value are given.
    pub fn backward_cached(&self, cache: &ForwardCache, dlogits: &[f64], dvalue: f64, grads: &mut GradientSet) {
        let input = cache.input.as_slice();
        let policy_feat = cache.policy_acts.last().map_or(input, |v| v.as_slice());
        let dpolicy = self.policy_head.backward(policy_feat, dlogits, &mut grads.policy_head);
        if self.architecture.shared_trunk {
            let dv = self.value_head.backward(policy_feat, &[dvalue], &mut grads.value_head);
            let combined: Vec<f64> = dpolicy.iter().zip(&dv).map(|(a, b)| a + b).collect();
            back_trunk(&self.trunk, input, &cache.policy_acts, combined, &mut grads.trunk);
        } else {
            let value_feat = cache.value_acts.last().map_or(input, |v| v.as_slice());
            let dv = self.value_head.backward(value_feat, &[dvalue], &mut grads.value_head);
            back_trunk(&self.trunk, input, &cache.policy_acts, dpolicy, &mut grads.trunk);
            back_trunk(&self.value_trunk, input, &cache.value_acts, dv, &mut grads.value_trunk);
        }
    }

    /// Gradient for a single input given upstream derivatives.
    pub fn backward(&self, input: &[f64], dlogits: &[f64], dvalue: f64) -> GradientSet {
        let cache = self.forward_cached(input);
        let mut grads = self.zeros_like();
        self.backward_cached(&cache, dlogits, dvalue, &mut grads);
        grads
    }
}

fn run_trunk(layers: &[Dense], input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for layer in layers {
        let x = acts.last().map_or(input, |v| v.as_slice());
        let mut out = Vec::with_capacity(layer.rows);
        layer.forward(x, &mut out);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        acts.push(out);
    }
    acts
}

fn back_trunk(layers: &[Dense], input: &[f64], acts: &[Vec<f64>], mut upstream: Vec<f64>, grads: &mut [Dense]) {
    for l in (0..layers.len()).rev() {
        for (g, a) in upstream.iter_mut().zip(&acts[l]) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }
        let x = if l == 0 { input } else { acts[l - 1].as_slice() };
        upstream = layers[l].backward(x, &upstream, &mut grads[l]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub logits: Vec<f64>,
    pub value: f64,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    policy_acts: Vec<Vec<f64>>,
    value_acts: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub value: f64,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(|l| l.exp()).collect()
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, num_parameters: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            first_moment: vec![0.0; num_parameters],
            second_moment: vec![0.0; num_parameters],
        }
    }

    /// Descends along `grads`.
    pub fn step(&mut self, params: &mut MlpParams, grads: &GradientSet) {
        self.steps += 1;
        let t = self.steps as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        let mut k = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            for (x, &gx) in p.iter_mut().zip(g) {
                let m = &mut self.first_moment[k];
                let v = &mut self.second_moment[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gx;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gx * gx;
                *x -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(shared: bool) -> MlpParams {
        let mut arch = Architecture::new(5, vec![7, 6], 4);
        arch.shared_trunk = shared;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = MlpParams::init(&arch, &mut rng);
        // Larger policy weights make the finite-difference check meaningful.
        p.policy_head.weights.iter_mut().for_each(|w| *w *= 100.0);
        p
    }

    fn loss(p: &MlpParams, x: &[f64], dl: &[f64], dv: f64) -> f64 {
        let o = p.forward(x);
        o.logits.iter().zip(dl).map(|(a, b)| a * b).sum::<f64>() + o.value * dv
    }

    fn gradient_check(shared: bool) {
        let p = net(shared);
        let x = [0.3, -1.2, 0.8, 0.05, 1.7];
        let dl = [0.4, -0.3, 1.1, -0.2];
        let dv = 0.7;
        let g = p.backward(&x, &dl, dv);
        let h = 1e-6;
        let n = p.tensors().len();
        for t in 0..n {
            let len = p.tensors()[t].len();
            for i in 0..len {
                let mut plus = p.clone();
                plus.tensors_mut()[t][i] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[t][i] -= h;
                let fd = (loss(&plus, &x, &dl, dv) - loss(&minus, &x, &dl, dv)) / (2.0 * h);
                let an = g.tensors()[t][i];
                assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "tensor {t} entry {i}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn shared_gradients_match_finite_differences() {
        gradient_check(true);
    }

    #[test]
    fn separate_gradients_match_finite_differences() {
        gradient_check(false);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Dense::orthogonal(4, 9, 1.0, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..9).map(|c| d.weights[a * 9 + c] * d.weights[b * 9 + c]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn initial_policy_is_near_uniform() {
        let arch = Architecture::new(10, vec![32, 32, 32, 32], 24);
        let p = MlpParams::init(&arch, &mut ChaCha8Rng::seed_from_u64(0));
        let probs = softmax(&p.forward(&[0.5; 10]).logits);
        for q in probs {
            assert!((q - 1.0 / 24.0).abs() < 0.01);
        }
        assert!(p.validate().is_ok());
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[2] < 1e-300);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn validate_rejects_wrong_shapes() {
        let mut p = net(true);
        p.policy_head.bias.pop();
        assert!(matches!(p.validate(), Err(NnError::CorruptPayload(_))));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let arch = Architecture::new(1, vec![], 1);
        let mut p = MlpParams::init(&arch, &mut ChaCha8Rng::seed_from_u64(4));
        let mut opt = Adam::new(0.05, p.num_parameters());
        for _ in 0..2000 {
            // loss = sum of squares of all parameters
            let mut g = p.clone();
            g.scale(2.0);
            opt.step(&mut p, &g);
        }
        assert!(p.l2_norm() < 1e-2);
    }
}
