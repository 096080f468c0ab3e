use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::chain::{build_chain, RobustChain};
use super::inner::sparse_objective;
use crate::error::{Error, Result};
use crate::model::{ConcretePomdp, Fsc};

/// Values above this are treated as divergence.
pub const DIVERGENCE_CAP: f64 = 1e9;

/// Chains up to this many transient states are evaluated by a dense solve.
const DENSE_SOLVE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Nature maximizes the cost.
    Pessimistic,
    /// Nature minimizes the cost.
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViConfig {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            tol: 1e-6,
            max_sweeps: 1_000_000,
        }
    }
}

/// Robust state values of a product chain.
#[derive(Debug, Clone)]
pub struct RobustValues {
    /// Per chain state; `+inf` where goals are not reached almost surely.
    pub values: Vec<f64>,
    /// `Σ b0(s) v(s, n0)`.
    pub value: f64,
    pub sweeps: usize,
    /// Chain states from which some reachable state cannot reach a goal.
    pub unreachable_goal: Vec<usize>,
    num_nodes: usize,
    index: Vec<usize>,
}

impl RobustValues {
    /// Value of product state `(s, n)`, if it was materialized.
    pub fn value_at(&self, s: usize, n: usize) -> Option<f64> {
        match self.index.get(s * self.num_nodes + n) {
            Some(&i) if i != usize::MAX => Some(self.values[i]),
            _ => None,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Chain states whose value is infinite: those from which the support graph
/// reaches a state that cannot reach a goal. Lower bounds are positive, so
/// the support does not depend on how nature resolves the intervals.
pub fn infinite_states(chain: &RobustChain) -> Vec<bool> {
    let n = chain.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in chain.successors(i) {
            preds[j].push(i);
        }
    }
    let backward = |seeds: Vec<usize>| {
        let mut seen = vec![false; n];
        let mut stack = seeds;
        for &i in &stack {
            seen[i] = true;
        }
        while let Some(i) = stack.pop() {
            for &p in &preds[i] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    };
    let reaches_goal = backward((0..n).filter(|&i| chain.is_goal(i)).collect());
    backward((0..n).filter(|&i| !reaches_goal[i]).collect())
}

/// One Jacobi sweep `out = C + inner(v)`. States flagged infinite are left
/// at `+inf`.
pub fn bellman_sweep(chain: &RobustChain, v: &[f64], mode: Mode, out: &mut [f64]) {
    let maximize = mode == Mode::Pessimistic;
    let mut scratch = Vec::new();
    for i in 0..chain.len() {
        out[i] = if chain.is_goal(i) {
            0.0
        } else if v[i].is_infinite() {
            f64::INFINITY
        } else {
            chain.cost(i) + sparse_objective(chain.successors(i), v, maximize, &mut scratch)
        };
    }
}

fn initial_value(chain: &RobustChain, values: &[f64]) -> f64 {
    chain
        .initial()
        .iter()
        .map(|&(i, p)| if p == 0.0 { 0.0 } else { p * values[i] })
        .sum()
}

fn finish(chain: &RobustChain, values: Vec<f64>, sweeps: usize, infinite: &[bool]) -> RobustValues {
    RobustValues {
        value: initial_value(chain, &values),
        values,
        sweeps,
        unreachable_goal: (0..chain.len()).filter(|&i| infinite[i]).collect(),
        num_nodes: chain.num_nodes(),
        index: chain.dense_index().to_vec(),
    }
}

/// Robust value iteration from `v = 0` until the sup-norm change drops
/// below `config.tol`.
pub fn robust_value_iteration(chain: &RobustChain, mode: Mode, config: &ViConfig) -> Result<RobustValues> {
    let infinite = infinite_states(chain);
    let mut v: Vec<f64> = infinite
        .iter()
        .map(|&inf| if inf { f64::INFINITY } else { 0.0 })
        .collect();
    let mut next = v.clone();
    let mut residual = f64::INFINITY;
    for sweep in 1..=config.max_sweeps {
        bellman_sweep(chain, &v, mode, &mut next);
        residual = 0.0;
        for i in 0..chain.len() {
            if infinite[i] {
                continue;
            }
            if next[i] > DIVERGENCE_CAP || next[i].is_nan() {
                return Err(Error::Divergence {
                    context: "robust value iteration".into(),
                    cap: DIVERGENCE_CAP,
                });
            }
            residual = f64::max(residual, (next[i] - v[i]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if residual < config.tol {
            return Ok(finish(chain, v, sweep, &infinite));
        }
    }
    Err(Error::NotConverged {
        context: "robust value iteration".into(),
        iterations: config.max_sweeps,
        residual,
    })
}

/// Exact expected cost of every state of a chain with point intervals,
/// from `(I - P) v = c` on the transient states.
pub fn evaluate_chain_exact(chain: &RobustChain) -> Result<RobustValues> {
    if !chain.successors_are_points() {
        return Err(Error::InvalidArgument(
            "exact evaluation needs a chain built from a concrete member".into(),
        ));
    }
    let infinite = infinite_states(chain);
    let transient: Vec<usize> = (0..chain.len())
        .filter(|&i| !infinite[i] && !chain.is_goal(i))
        .collect();
    if transient.len() <= DENSE_SOLVE_LIMIT {
        let mut pos = vec![usize::MAX; chain.len()];
        for (k, &i) in transient.iter().enumerate() {
            pos[i] = k;
        }
        let m = transient.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut c = DVector::<f64>::zeros(m);
        for (k, &i) in transient.iter().enumerate() {
            c[k] = chain.cost(i);
            for &(j, iv) in chain.successors(i) {
                if pos[j] != usize::MAX {
                    a[(k, pos[j])] -= iv.lo;
                }
            }
        }
        let x = a.lu().solve(&c).ok_or_else(|| Error::Divergence {
            context: "member evaluation (singular system)".into(),
            cap: DIVERGENCE_CAP,
        })?;
        let mut values: Vec<f64> = infinite
            .iter()
            .map(|&inf| if inf { f64::INFINITY } else { 0.0 })
            .collect();
        for (k, &i) in transient.iter().enumerate() {
            values[i] = x[k];
        }
        if values.iter().any(|v| v.is_finite() && *v > DIVERGENCE_CAP) {
            return Err(Error::Divergence {
                context: "member evaluation".into(),
                cap: DIVERGENCE_CAP,
            });
        }
        return Ok(finish(chain, values, 0, &infinite));
    }
    // Too large for a dense solve; with point intervals the robust sweep is
    // plain policy evaluation.
    robust_value_iteration(
        chain,
        Mode::Pessimistic,
        &ViConfig {
            tol: 1e-11,
            ..ViConfig::default()
        },
    )
}

/// Expected cumulative cost of `fsc` on a concrete member.
pub fn evaluate_member(member: &ConcretePomdp, fsc: &Fsc) -> Result<f64> {
    let chain = build_chain(member, fsc)?;
    Ok(evaluate_chain_exact(&chain)?.value)
}

impl RobustChain {
    fn successors_are_points(&self) -> bool {
        (0..self.len()).all(|i| self.successors(i).iter().all(|(_, iv)| iv.is_point()))
    }
}
