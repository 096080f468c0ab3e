#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_fsc::model::{Belief, ConcretePomdp, Fsc, Interval, PomdpBuilder, RobustPomdp};
use robust_fsc::policy::{NetConfig, NetworkParams};
use robust_fsc::sim::{DatasetMeta, Episode, Step, TrajectoryDataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every point of `{p in box : Σp = 1}` with at most one coordinate strictly
/// inside its interval. The optimum of a linear objective over the set is
/// attained at one of them.
pub fn vertex_candidates(boxes: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let n = boxes.len();
    let mut out = Vec::new();
    for free in 0..n {
        for mask in 0..(1usize << n) {
            if mask & (1 << free) != 0 {
                continue;
            }
            let mut p = vec![0.0; n];
            let mut sum = 0.0;
            for i in 0..n {
                if i != free {
                    p[i] = if mask & (1 << i) != 0 { boxes[i].1 } else { boxes[i].0 };
                    sum += p[i];
                }
            }
            p[free] = 1.0 - sum;
            if p[free] >= boxes[free].0 - 1e-12 && p[free] <= boxes[free].1 + 1e-12 {
                out.push(p);
            }
        }
    }
    out
}

pub fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn vertex_max(v: &[f64], boxes: &[(f64, f64)]) -> f64 {
    vertex_candidates(boxes)
        .iter()
        .map(|p| dot(p, v))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn vertex_min(v: &[f64], boxes: &[(f64, f64)]) -> f64 {
    vertex_candidates(boxes)
        .iter()
        .map(|p| dot(p, v))
        .fold(f64::INFINITY, f64::min)
}

/// Random box intersecting the simplex, `n` coordinates.
pub fn random_box(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w.iter()
        .map(|&p| {
            let lo = (p * rng.random_range(0.3..1.0)).max(1e-4);
            let hi = (p + rng.random_range(0.0..0.4)).min(1.0);
            (lo, hi)
        })
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Product states `(s, n)` indexed `s * N + n`, with interval rows, costs and
/// goal flags, built straight from the definitions.
pub struct Product {
    pub nodes: usize,
    pub rows: Vec<Vec<(usize, f64, f64)>>,
    pub cost: Vec<f64>,
    pub goal: Vec<bool>,
}

pub fn product(model: &RobustPomdp, fsc: &Fsc) -> Product {
    let nn = fsc.num_nodes();
    let size = model.num_states() * nn;
    let mut rows = vec![Vec::new(); size];
    let mut cost = vec![0.0; size];
    let mut goal = vec![false; size];
    for s in 0..model.num_states() {
        for n in 0..nn {
            let i = s * nn + n;
            if model.is_goal(s) {
                goal[i] = true;
                continue;
            }
            let z = model.observation(s);
            let m = fsc.next_node(n, z);
            let mut acc = vec![(0.0, 0.0); size];
            for (a, &w) in fsc.action_distribution(n, z).iter().enumerate() {
                cost[i] += w * model.cost(s, a);
                for &(t, iv) in model.row(s, a) {
                    acc[t * nn + m].0 += w * iv.lo;
                    acc[t * nn + m].1 += w * iv.hi;
                }
            }
            rows[i] = acc
                .into_iter()
                .enumerate()
                .filter(|(_, b)| b.1 > 0.0)
                .map(|(j, b)| (j, b.0, b.1))
                .collect();
        }
    }
    Product {
        nodes: nn,
        rows,
        cost,
        goal,
    }
}

impl Product {
    /// States from which the goal is reached with probability one under
    /// every member; positive lower bounds make the support member-free.
    pub fn proper(&self) -> Vec<bool> {
        let size = self.rows.len();
        let mut reach = self.goal.clone();
        loop {
            let mut changed = false;
            for i in 0..size {
                if !reach[i] && self.rows[i].iter().any(|&(j, _, _)| reach[j]) {
                    reach[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut doomed: Vec<bool> = reach.iter().map(|r| !r).collect();
        loop {
            let mut changed = false;
            for i in 0..size {
                if !doomed[i] && self.rows[i].iter().any(|&(j, _, _)| doomed[j]) {
                    doomed[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        doomed.iter().map(|d| !d).collect()
    }

    /// Values of fixed per-state distributions `choice[i]` (aligned with
    /// `rows[i]`).
    pub fn evaluate(&self, choice: &[Vec<f64>]) -> Vec<f64> {
        let size = self.rows.len();
        let ok = self.proper();
        let idx: Vec<usize> = (0..size).filter(|&i| ok[i] && !self.goal[i]).collect();
        let mut pos = vec![usize::MAX; size];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut a = vec![vec![0.0; idx.len()]; idx.len()];
        let mut b = vec![0.0; idx.len()];
        for (k, &i) in idx.iter().enumerate() {
            a[k][k] += 1.0;
            b[k] = self.cost[i];
            for (&(j, _, _), &p) in self.rows[i].iter().zip(&choice[i]) {
                if pos[j] != usize::MAX {
                    a[k][pos[j]] -= p;
                }
            }
        }
        let x = solve_linear(a, b);
        (0..size)
            .map(|i| {
                if self.goal[i] {
                    0.0
                } else if ok[i] {
                    x[pos[i]]
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    /// Robust values by policy iteration for nature over vertex candidates.
    pub fn robust_values(&self, pessimistic: bool) -> Vec<f64> {
        let size = self.rows.len();
        let cands: Vec<Vec<Vec<f64>>> = self
            .rows
            .iter()
            .map(|r| {
                if r.is_empty() {
                    vec![Vec::new()]
                } else {
                    vertex_candidates(&r.iter().map(|&(_, lo, hi)| (lo, hi)).collect::<Vec<_>>())
                }
            })
            .collect();
        let mut choice: Vec<Vec<f64>> = cands.iter().map(|c| c[0].clone()).collect();
        for _ in 0..1000 {
            let v = self.evaluate(&choice);
            let mut changed = false;
            for i in 0..size {
                if self.goal[i] || !v[i].is_finite() {
                    continue;
                }
                let score = |p: &Vec<f64>| -> f64 { self.rows[i].iter().zip(p).map(|(&(j, _, _), q)| q * v[j]).sum() };
                let sign = if pessimistic { 1.0 } else { -1.0 };
                let current = sign * score(&choice[i]);
                let best = cands[i]
                    .iter()
                    .max_by(|p, q| (sign * score(p)).total_cmp(&(sign * score(q))))
                    .unwrap();
                if sign * score(best) > current + 1e-12 {
                    choice[i] = best.clone();
                    changed = true;
                }
            }
            if !changed {
                return v;
            }
        }
        panic!("policy iteration did not terminate");
    }

    pub fn initial_value(&self, model: &RobustPomdp, fsc: &Fsc, v: &[f64]) -> f64 {
        model
            .initial_belief()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| p * v[s * self.nodes + fsc.initial_node()])
            .sum()
    }
}

/// Exact expected cost of a controller on a concrete member.
pub fn member_value(member: &ConcretePomdp, fsc: &Fsc) -> f64 {
    let robust = member.to_robust();
    let prod = product(&robust, fsc);
    let choice: Vec<Vec<f64>> = prod
        .rows
        .iter()
        .map(|r| r.iter().map(|&(_, lo, _)| lo).collect())
        .collect();
    let v = prod.evaluate(&choice);
    prod.initial_value(&robust, fsc, &v)
}

pub fn robust_value(model: &RobustPomdp, fsc: &Fsc, pessimistic: bool) -> f64 {
    let prod = product(model, fsc);
    let v = prod.robust_values(pessimistic);
    prod.initial_value(model, fsc, &v)
}

/// Random interval POMDP with at most `max_states` states, the last one a
/// goal. Degenerate instances have point intervals.
pub fn random_model(rng: &mut impl Rng, max_states: usize, degenerate: bool) -> RobustPomdp {
    let ns = rng.random_range(2..=max_states);
    let na = rng.random_range(1..=2);
    let nz = rng.random_range(1..=2);
    let goal = ns - 1;
    let mut b = PomdpBuilder::<Interval>::new(ns, na, nz);
    for s in 0..ns {
        b.observation(s, rng.random_range(0..nz)).unwrap();
    }
    for s in 0..goal {
        for a in 0..na {
            let mut support: Vec<usize> = (0..ns).filter(|_| rng.random_bool(0.5)).collect();
            if rng.random_bool(0.7) && !support.contains(&goal) {
                support.push(goal);
            }
            if !support.iter().any(|&t| t != s) {
                support.push(if s + 1 < ns { s + 1 } else { 0 });
            }
            support.sort();
            support.dedup();
            let boxes = if degenerate {
                let mut w: Vec<f64> = support.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= t);
                w.iter().map(|&p| (p, p)).collect()
            } else {
                random_box(rng, support.len())
            };
            for (&t, (lo, hi)) in support.iter().zip(boxes) {
                b.transition(s, a, t, Interval::new(lo, hi)).unwrap();
            }
            b.cost(s, a, rng.random_range(0.5..3.0)).unwrap();
        }
    }
    b.goal(goal).unwrap();
    if rng.random_bool(0.5) {
        b.initial(0, 1.0).unwrap();
    } else {
        let w: Vec<f64> = (0..goal).map(|_| rng.random_range(0.1..1.0)).collect();
        let t: f64 = w.iter().sum();
        for (s, p) in w.into_iter().enumerate() {
            b.initial(s, p / t).unwrap();
        }
    }
    b.build().unwrap()
}

pub fn random_fsc(rng: &mut impl Rng, nodes: usize, observations: usize, actions: usize) -> Fsc {
    let mut act = vec![vec![vec![0.0; actions]; observations]; nodes];
    let mut mem = vec![vec![0; observations]; nodes];
    for n in 0..nodes {
        for z in 0..observations {
            if rng.random_bool(0.5) {
                act[n][z][rng.random_range(0..actions)] = 1.0;
            } else {
                let w: Vec<f64> = (0..actions).map(|_| rng.random_range(0.1..1.0)).collect();
                let t: f64 = w.iter().sum();
                act[n][z] = w.into_iter().map(|x| x / t).collect();
            }
            mem[n][z] = rng.random_range(0..nodes);
        }
    }
    Fsc::new(rng.random_range(0..nodes), act, mem).unwrap()
}

pub struct Instance {
    pub model: RobustPomdp,
    pub fsc: Fsc,
}

/// Random model of at most four states with a random controller of at most
/// two nodes.
pub fn random_instance(seed: u64, degenerate: bool) -> Instance {
    let mut r = rng(seed);
    let model = random_model(&mut r, 4, degenerate);
    let nodes = r.random_range(1..=2);
    let fsc = random_fsc(&mut r, nodes, model.num_observations(), model.num_actions());
    Instance { model, fsc }
}

/// The two-state self-loop: state 0 loops with probability in [0.4, 0.6]
/// and otherwise reaches the goal, at cost 1 per step.
pub fn self_loop() -> RobustPomdp {
    let mut b = PomdpBuilder::<Interval>::new(2, 1, 2);
    b.observation(0, 0).unwrap().observation(1, 1).unwrap();
    b.transition(0, 0, 0, Interval::new(0.4, 0.6)).unwrap();
    b.transition(0, 0, 1, Interval::new(0.4, 0.6)).unwrap();
    b.cost(0, 0, 1.0).unwrap().goal(1).unwrap().initial(0, 1.0).unwrap();
    b.build().unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= tol
}

/// Straight-line re-implementation of one network step, reading parameters
/// by the documented storage order. Returns the next hidden state and the
/// action probabilities.
pub fn gru_step(
    theta: &[f64],
    (observations, actions, embed, hidden, head): (usize, usize, usize, usize, usize),
    h: &[f64],
    z: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (e, d) = (embed, hidden);
    let x: Vec<f64> = (0..e).map(|j| theta[z * e + j]).collect();
    let mut at = observations * e;
    let mut gate = |input: &[f64], squash: fn(f64) -> f64| -> Vec<f64> {
        let w = at;
        let b = w + d * e;
        let u = b + d;
        at = u + d * d;
        (0..d)
            .map(|i| {
                let mut a = theta[b + i];
                for j in 0..e {
                    a += theta[w + i * e + j] * x[j];
                }
                for j in 0..d {
                    a += theta[u + i * d + j] * input[j];
                }
                squash(a)
            })
            .collect()
    };
    fn sigmoid(a: f64) -> f64 {
        1.0 / (1.0 + (-a).exp())
    }
    let r = gate(h, sigmoid);
    let u = gate(h, sigmoid);
    let rh: Vec<f64> = (0..d).map(|i| r[i] * h[i]).collect();
    let c = gate(&rh, f64::tanh);
    let hn: Vec<f64> = (0..d).map(|i| u[i] * h[i] + (1.0 - u[i]) * c[i]).collect();
    let mut layer = |input: &[f64], out: usize, relu: bool| -> Vec<f64> {
        let n = input.len();
        let w = at;
        let b = w + out * n;
        at = b + out;
        (0..out)
            .map(|i| {
                let mut a = theta[b + i];
                for j in 0..n {
                    a += theta[w + i * n + j] * input[j];
                }
                if relu {
                    a.max(0.0)
                } else {
                    a
                }
            })
            .collect()
    };
    let a1 = layer(&hn, head, true);
    let a2 = layer(&a1, head, true);
    let logits = layer(&a2, actions, false);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let probs = logits.iter().map(|l| (l - m).exp() / total).collect();
    (hn, probs)
}

/// Random SSP whose action 0 always reaches the goal with positive
/// probability. With `injective` every state has its own observation.
pub fn random_ssp(seed: u64, states: usize, injective: bool) -> ConcretePomdp {
    let mut r = rng(seed);
    let na = 2;
    let goal = states - 1;
    let nz = if injective { states } else { 2 };
    let mut b = PomdpBuilder::<f64>::new(states, na, nz);
    for s in 0..states {
        b.observation(s, if injective { s } else { r.random_range(0..nz) })
            .unwrap();
    }
    for s in 0..goal {
        for a in 0..na {
            let mut w: Vec<f64> = (0..states)
                .map(|_| {
                    if r.random_bool(0.6) {
                        r.random_range(0.1..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            if a == 0 || w.iter().all(|&x| x == 0.0) {
                w[goal] += 0.3;
            }
            let t: f64 = w.iter().sum();
            for (u, x) in w.into_iter().enumerate() {
                if x > 0.0 {
                    b.transition(s, a, u, x / t).unwrap();
                }
            }
            b.cost(s, a, r.random_range(0.5..4.0)).unwrap();
        }
    }
    b.goal(goal).unwrap().initial(0, 1.0).unwrap();
    b.build().unwrap()
}

/// Optimal values as the componentwise minimum over every deterministic
/// memoryless policy, each evaluated by a linear solve.
pub fn policy_enumeration(m: &ConcretePomdp) -> Vec<f64> {
    let ns = m.num_states();
    let na = m.num_actions();
    let mut best = vec![f64::INFINITY; ns];
    for code in 0..na.pow(ns as u32) {
        let pi: Vec<usize> = (0..ns).map(|s| code / na.pow(s as u32) % na).collect();
        let prod = Product {
            nodes: 1,
            rows: (0..ns)
                .map(|s| {
                    if m.is_goal(s) {
                        Vec::new()
                    } else {
                        m.row(s, pi[s]).iter().map(|&(t, p)| (t, p, p)).collect()
                    }
                })
                .collect(),
            cost: (0..ns)
                .map(|s| if m.is_goal(s) { 0.0 } else { m.cost(s, pi[s]) })
                .collect(),
            goal: (0..ns).map(|s| m.is_goal(s)).collect(),
        };
        let choice: Vec<Vec<f64>> = prod.rows.iter().map(|r| r.iter().map(|x| x.1).collect()).collect();
        for (b, v) in best.iter_mut().zip(prod.evaluate(&choice)) {
            *b = b.min(v);
        }
    }
    best
}

pub fn q_star(m: &ConcretePomdp, v: &[f64]) -> Vec<Vec<f64>> {
    (0..m.num_states())
        .map(|s| {
            (0..m.num_actions())
                .map(|a| {
                    if m.is_goal(s) {
                        0.0
                    } else {
                        m.cost(s, a) + m.row(s, a).iter().map(|&(t, p)| p * v[t]).sum::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_belief(r: &mut impl Rng, n: usize) -> Belief {
    let w: Vec<f64> = (0..n)
        .map(|_| if r.random_bool(0.7) { r.random::<f64>() } else { 0.0 })
        .collect();
    let t: f64 = w.iter().sum();
    if t == 0.0 {
        return Belief::dirac(n, 0);
    }
    Belief::new(w.into_iter().map(|x| x / t).collect()).unwrap()
}

/// States 1 and 2 share an observation but need opposite actions; every
/// path reaches the goal within two steps.
pub fn aliased() -> ConcretePomdp {
    let mut b = PomdpBuilder::<f64>::new(4, 2, 3);
    b.observation(0, 0).unwrap().observation(1, 1).unwrap();
    b.observation(2, 1).unwrap().observation(3, 2).unwrap();
    b.transition(0, 0, 1, 0.5).unwrap().transition(0, 0, 2, 0.5).unwrap();
    b.transition(0, 1, 1, 0.2).unwrap().transition(0, 1, 3, 0.8).unwrap();
    for s in 1..3 {
        b.transition(s, 0, 3, 1.0).unwrap().transition(s, 1, 3, 1.0).unwrap();
    }
    for (s, a, c) in [
        (0, 0, 1.0),
        (0, 1, 4.0),
        (1, 0, 1.0),
        (1, 1, 10.0),
        (2, 0, 10.0),
        (2, 1, 1.0),
    ] {
        b.cost(s, a, c).unwrap();
    }
    b.goal(3).unwrap().initial(0, 1.0).unwrap();
    b.build().unwrap()
}

pub fn dataset(episodes: Vec<Vec<(usize, Vec<f64>)>>) -> TrajectoryDataset {
    TrajectoryDataset {
        meta: DatasetMeta {
            seed: 0,
            model_hash: String::new(),
            episodes: episodes.len(),
            horizon: 0,
        },
        episodes: episodes
            .into_iter()
            .map(|steps| Episode {
                steps: steps
                    .into_iter()
                    .map(|(observation, target)| Step {
                        observation,
                        action: 0,
                        target,
                        belief: None,
                    })
                    .collect(),
                cost: 0.0,
                reached_goal: false,
            })
            .collect(),
    }
}

pub fn random_params(c: NetConfig, seed: u64) -> NetworkParams {
    let len = NetworkParams::init(c, 0).len();
    let mut r = rng(seed);
    NetworkParams::from_theta(c, (0..len).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_dataset(
    seed: u64,
    observations: usize,
    actions: usize,
    episodes: usize,
    length: usize,
) -> TrajectoryDataset {
    let mut r = rng(seed);
    dataset(
        (0..episodes)
            .map(|_| {
                (0..length)
                    .map(|_| {
                        let mut t = vec![0.0; actions];
                        t[r.random_range(0..actions)] = 1.0;
                        (r.random_range(0..observations), t)
                    })
                    .collect()
            })
            .collect(),
    )
}
