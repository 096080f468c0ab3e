//! Small dense-network toolkit over flat parameter vectors: affine layers,
//! activations, multilayer perceptrons with manual backpropagation, Adam and
//! global-norm clipping.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    /// `1.5 tanh(x) + 0.5 tanh(-3x)`, flatter than `tanh` around zero.
    TanhFlat,
}

pub fn tanh_flat(x: f64) -> f64 {
    1.5 * x.tanh() + 0.5 * (-3.0 * x).tanh()
}

fn tanh_flat_derivative(x: f64) -> f64 {
    let a = x.tanh();
    let b = (-3.0 * x).tanh();
    1.5 * (1.0 - a * a) - 1.5 * (1.0 - b * b)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::TanhFlat => tanh_flat(x),
        }
    }

    /// Derivative at pre-activation `x` with output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::TanhFlat => tanh_flat_derivative(x),
        }
    }
}

/// `out += W x` with `W` row-major `rows x cols`.
pub fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[i * cols..(i + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += Wᵀ dy`.
pub fn matvec_t_add(w: &[f64], rows: usize, cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (i, &g) in dy.iter().enumerate().take(rows) {
        if g == 0.0 {
            continue;
        }
        for (d, &a) in dx.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *d += a * g;
        }
    }
}

/// `gw += dy xᵀ`.
pub fn outer_add(gw: &mut [f64], rows: usize, cols: usize, dy: &[f64], x: &[f64]) {
    for (i, &g) in dy.iter().enumerate().take(rows) {
        if g == 0.0 {
            continue;
        }
        for (d, &a) in gw[i * cols..(i + 1) * cols].iter_mut().zip(x) {
            *d += g * a;
        }
    }
}

/// Affine map `y = W x + b` stored at `offset` as `W` (row-major) then `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl Dense {
    pub fn len(&self) -> usize {
        self.input * self.output + self.output
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn split(&self) -> (usize, usize) {
        let w = self.offset;
        (w, w + self.input * self.output)
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (w, b) = self.split();
        let mut y = theta[b..b + self.output].to_vec();
        matvec_add(&theta[w..b], self.output, self.input, x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and input gradients into `dx`.
    pub fn backward(&self, theta: &[f64], grad: &mut [f64], x: &[f64], dy: &[f64], dx: &mut [f64]) {
        let (w, b) = self.split();
        outer_add(&mut grad[w..b], self.output, self.input, dy, x);
        for (g, d) in grad[b..b + self.output].iter_mut().zip(dy) {
            *g += d;
        }
        matvec_t_add(&theta[w..b], self.output, self.input, dy, dx);
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(&self, theta: &mut [f64], rng: &mut impl Rng) {
        let (w, b) = self.split();
        let limit = (6.0 / (self.input + self.output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        for x in &mut theta[w..b] {
            *x = dist.sample(rng);
        }
        theta[b..b + self.output].iter_mut().for_each(|x| *x = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<(Dense, Activation)>,
}

/// Per-layer inputs, pre-activations and outputs of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// Layers `sizes[i] -> sizes[i + 1]` with `activations[i]`, packed from `offset`.
    pub fn new(sizes: &[usize], activations: &[Activation], offset: usize) -> Self {
        assert_eq!(sizes.len(), activations.len() + 1);
        let mut at = offset;
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let d = Dense {
                    input: w[0],
                    output: w[1],
                    offset: at,
                };
                at += d.len();
                (d, act)
            })
            .collect();
        Mlp { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|(d, _)| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn init(&self, theta: &mut [f64], rng: &mut impl Rng) {
        for (d, _) in &self.layers {
            d.init(theta, rng);
        }
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> MlpCache {
        let mut cache = MlpCache::default();
        let mut cur = x.to_vec();
        for (d, act) in &self.layers {
            let pre = d.forward(theta, &cur);
            let post: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
            cache.inputs.push(std::mem::replace(&mut cur, post.clone()));
            cache.pre.push(pre);
            cache.post.push(post);
        }
        cache
    }

    /// Backpropagates `dy` through the cached pass; returns the input gradient.
    pub fn backward(&self, theta: &[f64], grad: &mut [f64], cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let mut g = dy.to_vec();
        for (k, (d, act)) in self.layers.iter().enumerate().rev() {
            for ((gi, &x), &y) in g.iter_mut().zip(&cache.pre[k]).zip(&cache.post[k]) {
                *gi *= act.derivative(x, y);
            }
            let mut dx = vec![0.0; d.input];
            d.backward(theta, grad, &cache.inputs[k], &g, &mut dx);
            g = dx;
        }
        g
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}
