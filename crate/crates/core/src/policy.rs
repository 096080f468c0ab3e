//! Recurrent policy: observation embedding, a GRU cell and a two-layer
//! ReLU head with a softmax over actions, trained by backpropagation
//! through time against supervision distributions.
//!
//! GRU convention:
//!
//! ```text
//! r  = σ(W_r x + U_r h + b_r)
//! u  = σ(W_u x + U_u h + b_u)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = u ⊙ h + (1 - u) ⊙ h̃
//! ```
//!
//! All parameters live in one flat vector; see [`Layout`] for the order.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::qbn::{Code, Qbn, QbnPass, QuantLevels};
use crate::nn::{
    clip_global_norm, matvec_add, matvec_t_add, outer_add, sigmoid, Activation, Adam, Dense, Mlp, MlpCache,
};
use crate::sim::{Episode, TrajectoryDataset};

pub type HiddenState = Vec<f64>;

/// Quantized bottleneck inserted after the GRU (end-to-end variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bottleneck {
    pub code: usize,
    pub levels: QuantLevels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub observations: usize,
    pub actions: usize,
    pub embed: usize,
    pub hidden: usize,
    pub head: usize,
    pub bottleneck: Option<Bottleneck>,
}

impl NetConfig {
    pub fn new(observations: usize, actions: usize) -> Self {
        NetConfig {
            observations,
            actions,
            embed: 8,
            hidden: 16,
            head: 32,
            bottleneck: None,
        }
    }
}

/// Offsets of the parameter blocks, in storage order: embedding
/// (`|Z| x e`), then for each gate `r, u, h` the input map `W` with bias `b`
/// followed by the recurrent matrix `U`, then the head, then the optional
/// bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub embedding: usize,
    /// Input maps for the reset, update and candidate gates.
    pub input: [Dense; 3],
    /// Offsets of `U_r`, `U_u`, `U_h`.
    pub recurrent: [usize; 3],
    pub head: Mlp,
    pub bottleneck: Option<Qbn>,
    pub len: usize,
}

impl Layout {
    pub fn new(c: &NetConfig) -> Self {
        let d = c.hidden;
        let mut at = c.observations * c.embed;
        let mut input = [Dense {
            input: c.embed,
            output: d,
            offset: 0,
        }; 3];
        let mut recurrent = [0; 3];
        for g in 0..3 {
            input[g].offset = at;
            at += input[g].len();
            recurrent[g] = at;
            at += d * d;
        }
        let head = Mlp::new(
            &[d, c.head, c.head, c.actions],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            at,
        );
        at += head.len();
        let bottleneck = c.bottleneck.map(|b| {
            let q = Qbn::new(d, b.code, b.levels, at);
            at += q.len();
            q
        });
        Layout {
            embedding: 0,
            input,
            recurrent,
            head,
            bottleneck,
            len: at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetConfig,
    pub theta: Vec<f64>,
    layout: Layout,
}

/// Everything one step needs for backpropagation.
#[derive(Debug, Clone)]
struct StepCache {
    z: usize,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    u: Vec<f64>,
    c: Vec<f64>,
    rh: Vec<f64>,
    bottleneck: Option<QbnPass>,
    head: MlpCache,
    logp: Vec<f64>,
}

/// Result of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub hidden: HiddenState,
    pub probs: Vec<f64>,
    /// Bottleneck code, for networks with a bottleneck.
    pub code: Option<Code>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// `-Σ_a μ(a) log π(a)` from log-probabilities, skipping zero targets.
pub fn cross_entropy(target: &[f64], logp: &[f64]) -> f64 {
    -target
        .iter()
        .zip(logp)
        .filter(|(m, _)| **m != 0.0)
        .map(|(m, l)| m * l)
        .sum::<f64>()
}

fn orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl NetworkParams {
    /// Random initialization: normal embeddings, Glorot input and head
    /// weights, orthogonal recurrent matrices, zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Self {
        let layout = Layout::new(&config);
        let mut theta = vec![0.0; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = config.observations * config.embed;
        for x in &mut theta[..emb] {
            *x = StandardNormal.sample(&mut rng);
        }
        let d = config.hidden;
        for g in 0..3 {
            layout.input[g].init(&mut theta, &mut rng);
            let q = orthogonal(d, &mut rng);
            for i in 0..d {
                for j in 0..d {
                    theta[layout.recurrent[g] + i * d + j] = q[(i, j)];
                }
            }
        }
        layout.head.init(&mut theta, &mut rng);
        if let Some(q) = &layout.bottleneck {
            q.init(&mut theta, &mut rng);
        }
        NetworkParams { config, theta, layout }
    }

    pub fn from_theta(config: NetConfig, theta: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(&config);
        if theta.len() != layout.len {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                layout.len,
                theta.len()
            )));
        }
        Ok(NetworkParams { config, theta, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn initial_hidden(&self) -> HiddenState {
        vec![0.0; self.config.hidden]
    }

    /// Recurrent matrix of gate `g` (0 = reset, 1 = update, 2 = candidate).
    pub fn recurrent_matrix(&self, g: usize) -> DMatrix<f64> {
        let d = self.config.hidden;
        let at = self.layout.recurrent[g];
        DMatrix::from_row_slice(d, d, &self.theta[at..at + d * d])
    }

    fn step_cached(&self, h: &[f64], z: usize) -> (Vec<f64>, StepCache) {
        let c = &self.config;
        let t = &self.theta;
        let d = c.hidden;
        let x = &t[z * c.embed..(z + 1) * c.embed];
        let gate = |g: usize, input: &[f64]| {
            let mut a = self.layout.input[g].forward(t, x);
            let u = self.layout.recurrent[g];
            matvec_add(&t[u..u + d * d], d, d, input, &mut a);
            a
        };
        let r: Vec<f64> = gate(0, h).into_iter().map(sigmoid).collect();
        let u: Vec<f64> = gate(1, h).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = gate(2, &rh).into_iter().map(f64::tanh).collect();
        let mut hn: Vec<f64> = (0..d).map(|i| u[i] * h[i] + (1.0 - u[i]) * cand[i]).collect();
        let bottleneck = self.layout.bottleneck.as_ref().map(|q| {
            let pass = q.forward(t, &hn);
            hn = pass.output().to_vec();
            pass
        });
        let head = self.layout.head.forward(t, &hn);
        let logp = log_softmax(head.output());
        let cache = StepCache {
            z,
            h_prev: h.to_vec(),
            r,
            u,
            c: cand,
            rh,
            bottleneck,
            head,
            logp,
        };
        (hn, cache)
    }

    /// One step: consume observation `z` from hidden state `h`.
    pub fn forward(&self, h: &[f64], z: usize) -> StepOutput {
        let (hidden, cache) = self.step_cached(h, z);
        StepOutput {
            hidden,
            probs: cache.logp.iter().map(|l| l.exp()).collect(),
            code: cache.bottleneck.as_ref().map(QbnPass::code),
        }
    }

    /// Backpropagates one step. `dh_out` is the gradient flowing into the
    /// step's output hidden state from later steps; `dlogits` the head
    /// gradient. Returns the gradient for the previous hidden state.
    fn step_backward(&self, cache: &StepCache, dlogits: &[f64], dh_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let c = &self.config;
        let t = &self.theta;
        let d = c.hidden;
        let mut dh = self.layout.head.backward(t, grad, &cache.head, dlogits);
        for (a, b) in dh.iter_mut().zip(dh_out) {
            *a += b;
        }
        if let (Some(q), Some(pass)) = (&self.layout.bottleneck, &cache.bottleneck) {
            dh = q.backward(t, grad, pass, &dh);
        }
        let h = &cache.h_prev;
        let mut dprev: Vec<f64> = (0..d).map(|i| dh[i] * cache.u[i]).collect();
        let mut dx = vec![0.0; c.embed];
        let x = &t[cache.z * c.embed..(cache.z + 1) * c.embed];

        let dc_pre: Vec<f64> = (0..d)
            .map(|i| dh[i] * (1.0 - cache.u[i]) * (1.0 - cache.c[i] * cache.c[i]))
            .collect();
        let du_pre: Vec<f64> = (0..d)
            .map(|i| dh[i] * (h[i] - cache.c[i]) * cache.u[i] * (1.0 - cache.u[i]))
            .collect();

        // Candidate gate.
        self.layout.input[2].backward(t, grad, x, &dc_pre, &mut dx);
        let uh = self.layout.recurrent[2];
        outer_add(&mut grad[uh..uh + d * d], d, d, &dc_pre, &cache.rh);
        let mut drh = vec![0.0; d];
        matvec_t_add(&t[uh..uh + d * d], d, d, &dc_pre, &mut drh);
        let dr_pre: Vec<f64> = (0..d)
            .map(|i| drh[i] * h[i] * cache.r[i] * (1.0 - cache.r[i]))
            .collect();
        for i in 0..d {
            dprev[i] += drh[i] * cache.r[i];
        }

        // Update and reset gates.
        for (g, dpre) in [(1, &du_pre), (0, &dr_pre)] {
            self.layout.input[g].backward(t, grad, x, dpre, &mut dx);
            let ug = self.layout.recurrent[g];
            outer_add(&mut grad[ug..ug + d * d], d, d, dpre, h);
            matvec_t_add(&t[ug..ug + d * d], d, d, dpre, &mut dprev);
        }

        let e = cache.z * c.embed;
        for (gi, v) in grad[e..e + c.embed].iter_mut().zip(dx) {
            *gi += v;
        }
        dprev
    }

    /// Summed cross-entropy of one episode, accumulating `scale` times its
    /// gradient into `grad` when given.
    fn episode_loss(&self, episode: &Episode, scale: f64, grad: Option<&mut [f64]>) -> f64 {
        let mut h = self.initial_hidden();
        let mut caches = Vec::with_capacity(episode.steps.len());
        let mut total = 0.0;
        for step in &episode.steps {
            let (hn, cache) = self.step_cached(&h, step.observation);
            total += cross_entropy(&step.target, &cache.logp);
            caches.push(cache);
            h = hn;
        }
        if let Some(grad) = grad {
            let mut dh = vec![0.0; self.config.hidden];
            for (cache, step) in caches.iter().zip(&episode.steps).rev() {
                // d(-Σ μ log softmax)/dlogits = π Σμ - μ.
                let mass: f64 = step.target.iter().sum();
                let dlogits: Vec<f64> = cache
                    .logp
                    .iter()
                    .zip(&step.target)
                    .map(|(l, m)| scale * (l.exp() * mass - m))
                    .collect();
                dh = self.step_backward(cache, &dlogits, &dh, grad);
            }
        }
        total
    }

    /// Mean cross-entropy over the steps of `episodes` and its gradient.
    pub fn loss_and_gradient(&self, episodes: &[&Episode]) -> (f64, Vec<f64>) {
        let steps: usize = episodes.iter().map(|e| e.steps.len()).sum();
        let mut grad = vec![0.0; self.theta.len()];
        if steps == 0 {
            return (0.0, grad);
        }
        let scale = 1.0 / steps as f64;
        let total: f64 = episodes
            .iter()
            .map(|e| self.episode_loss(e, scale, Some(&mut grad)))
            .sum();
        (total * scale, grad)
    }

    /// Hidden states after every step of an episode.
    pub fn replay(&self, episode: &Episode) -> Vec<StepOutput> {
        let mut h = self.initial_hidden();
        episode
            .steps
            .iter()
            .map(|s| {
                let out = self.forward(&h, s.observation);
                h = out.hidden.clone();
                out
            })
            .collect()
    }

    /// Flat text checkpoint; see [`NetworkParams::from_checkpoint`].
    pub fn to_checkpoint(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "rnn v1");
        let _ = writeln!(out, "observations {}", c.observations);
        let _ = writeln!(out, "actions {}", c.actions);
        let _ = writeln!(out, "embed {}", c.embed);
        let _ = writeln!(out, "hidden {}", c.hidden);
        let _ = writeln!(out, "head {}", c.head);
        if let Some(b) = c.bottleneck {
            let _ = writeln!(out, "bottleneck {} {}", b.code, b.levels.count());
        }
        let _ = writeln!(out, "params {}", self.theta.len());
        for x in &self.theta {
            let _ = writeln!(out, "{x:?}");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let lines: Vec<(usize, Vec<&str>)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
            .filter(|(_, w)| !w.is_empty())
            .collect();
        let mut at = 0;
        let mut take = |key: &str| -> Result<(usize, Vec<&str>)> {
            let (n, words) = lines
                .get(at)
                .cloned()
                .ok_or_else(|| Error::parse(0, 0, format!("missing `{key}`")))?;
            if words[0] != key {
                return Err(Error::parse(n, 1, format!("expected `{key}`")));
            }
            at += 1;
            Ok((n, words[1..].to_vec()))
        };
        let (n, version) = take("rnn")?;
        if version != ["v1"] {
            return Err(Error::parse(n, 5, "unsupported checkpoint version"));
        }
        let mut count = |key: &str| -> Result<usize> {
            let (n, words) = take(key)?;
            match words.as_slice() {
                [w] => w
                    .parse()
                    .map_err(|_| Error::parse(n, key.len() + 2, format!("bad count `{w}`"))),
                _ => Err(Error::parse(n, 1, format!("expected `{key} N`"))),
            }
        };
        let mut config = NetConfig {
            observations: count("observations")?,
            actions: count("actions")?,
            embed: count("embed")?,
            hidden: count("hidden")?,
            head: count("head")?,
            bottleneck: None,
        };
        if lines.get(at).is_some_and(|(_, w)| w[0] == "bottleneck") {
            let (n, words) = lines[at].clone();
            at += 1;
            let levels = match words.get(2).copied() {
                Some("3") => QuantLevels::Three,
                Some("2") => QuantLevels::Two,
                _ => return Err(Error::parse(n, 1, "expected `bottleneck B L` with L in {2, 3}")),
            };
            let code = words[1].parse().map_err(|_| Error::parse(n, 12, "bad code size"))?;
            config.bottleneck = Some(Bottleneck { code, levels });
        }
        let (n, words) = lines
            .get(at)
            .cloned()
            .ok_or_else(|| Error::parse(0, 0, "missing `params`"))?;
        at += 1;
        let len: usize = match words.as_slice() {
            ["params", w] => w.parse().map_err(|_| Error::parse(n, 8, "bad count"))?,
            _ => return Err(Error::parse(n, 1, "expected `params N`")),
        };
        let theta = lines[at..]
            .iter()
            .map(|(n, w)| {
                w[0].parse::<f64>()
                    .map_err(|_| Error::parse(*n, 1, format!("bad number `{}`", w[0])))
            })
            .collect::<Result<Vec<_>>>()?;
        if theta.len() != len {
            return Err(Error::parse(
                0,
                0,
                format!("expected {len} parameters, found {}", theta.len()),
            ));
        }
        Self::from_theta(config, theta)
    }
}

/// Mean cross-entropy of the network's predictions against the dataset
/// targets, hidden state threaded per episode from zero.
pub fn loss(params: &NetworkParams, dataset: &TrajectoryDataset) -> f64 {
    let steps = dataset.num_steps();
    if steps == 0 {
        return 0.0;
    }
    let total: f64 = dataset.episodes.iter().map(|e| params.episode_loss(e, 0.0, None)).sum();
    total / steps as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            batch_size: 32,
            lr: 1e-3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Adam on shuffled minibatches of episodes. Returns the minibatch loss
/// before every update.
pub fn train_epochs(params: &mut NetworkParams, dataset: &TrajectoryDataset, config: &TrainConfig) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(params.len(), config.lr);
    let mut order: Vec<usize> = (0..dataset.episodes.len()).collect();
    let mut trace = Vec::new();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let episodes: Vec<&Episode> = batch.iter().map(|&i| &dataset.episodes[i]).collect();
            if episodes.iter().all(|e| e.steps.is_empty()) {
                continue;
            }
            let (l, mut grad) = params.loss_and_gradient(&episodes);
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss("recurrent policy training".into()));
            }
            clip_global_norm(&mut grad, config.clip_norm);
            adam.step(&mut params.theta, &grad);
            trace.push(l);
        }
    }
    Ok(trace)
}

/// Largest relative error between the analytic gradient of [`loss`] and
/// central finite differences with step `1e-6`, over every parameter.
/// Differences are relative to `max(|g|, |fd|, 1e-3)`.
pub fn gradient_check(params: &NetworkParams, dataset: &TrajectoryDataset) -> f64 {
    let episodes: Vec<&Episode> = dataset.episodes.iter().collect();
    let (_, grad) = params.loss_and_gradient(&episodes);
    let step = 1e-6;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let x = params.theta[i];
        probe.theta[i] = x + step;
        let up = loss(&probe, dataset);
        probe.theta[i] = x - step;
        let down = loss(&probe, dataset);
        probe.theta[i] = x;
        let fd = (up - down) / (2.0 * step);
        let denom = grad[i].abs().max(fd.abs()).max(1e-3);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}
