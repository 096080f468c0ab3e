//! Fast approximate action values for a concrete POMDP, used to supervise
//! the recurrent policy: QMDP (belief-weighted MDP action values) and the
//! fast informed bound (alpha vectors that account for the next
//! observation). Both are computed with Jacobi sweeps, so results do not
//! depend on iteration order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, ConcretePomdp};
use crate::robust::DIVERGENCE_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_iters: 200_000,
        }
    }
}

/// Optimal values of the fully observable SSP underlying a POMDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpValues {
    /// `v[s] = min_a q[s][a]`; `+inf` where goals cannot be reached almost surely.
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Sup-norm change of every sweep.
    pub residuals: Vec<f64>,
}

/// Alpha vector per action, `alpha[a][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FibVectors {
    pub alpha: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// States from which some policy reaches a goal with probability one.
fn almost_sure_states(model: &ConcretePomdp) -> Vec<bool> {
    let ns = model.num_states();
    let mut keep = vec![true; ns];
    loop {
        let allowed = |s: usize, a: usize, keep: &[bool]| {
            let row = model.row(s, a);
            !row.is_empty() && row.iter().all(|&(t, _)| keep[t])
        };
        let mut reach: Vec<bool> = (0..ns).map(|s| model.is_goal(s)).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..ns {
                if reach[s] || !keep[s] {
                    continue;
                }
                let hit = (0..model.num_actions())
                    .any(|a| allowed(s, a, &keep) && model.row(s, a).iter().any(|&(t, _)| reach[t]));
                if hit {
                    reach[s] = true;
                    changed = true;
                }
            }
        }
        if reach == keep {
            return keep;
        }
        keep = reach;
    }
}

fn expected(row: &[(usize, f64)], v: &[f64]) -> f64 {
    row.iter().filter(|(_, p)| *p != 0.0).map(|&(t, p)| p * v[t]).sum()
}

/// Value iteration on the underlying MDP from `v = 0`.
pub fn solve_mdp(model: &ConcretePomdp, config: &SolverConfig) -> Result<MdpValues> {
    let ns = model.num_states();
    let na = model.num_actions();
    let finite = almost_sure_states(model);
    let mut v: Vec<f64> = finite.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let mut q = vec![vec![0.0; na]; ns];
    let mut residuals = Vec::new();
    for iter in 1..=config.max_iters {
        let mut next = v.clone();
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            if model.is_goal(s) {
                q[s].iter_mut().for_each(|x| *x = 0.0);
                next[s] = 0.0;
                continue;
            }
            for a in 0..na {
                let row = model.row(s, a);
                q[s][a] = if row.is_empty() {
                    f64::INFINITY
                } else {
                    model.cost(s, a) + expected(row, &v)
                };
            }
            next[s] = q[s].iter().copied().fold(f64::INFINITY, f64::min);
            if finite[s] {
                if next[s] > DIVERGENCE_CAP {
                    return Err(Error::Divergence {
                        context: "MDP value iteration".into(),
                        cap: DIVERGENCE_CAP,
                    });
                }
                residual = residual.max((next[s] - v[s]).abs());
            }
        }
        v = next;
        residuals.push(residual);
        if residual < config.tol {
            // Refresh q against the final v so that v = min_a q holds exactly.
            for s in 0..ns {
                if model.is_goal(s) {
                    continue;
                }
                for a in 0..na {
                    let row = model.row(s, a);
                    q[s][a] = if row.is_empty() {
                        f64::INFINITY
                    } else {
                        model.cost(s, a) + expected(row, &v)
                    };
                }
                v[s] = q[s].iter().copied().fold(f64::INFINITY, f64::min);
            }
            return Ok(MdpValues {
                v,
                q,
                iterations: iter,
                residuals,
            });
        }
    }
    Err(Error::NotConverged {
        context: "MDP value iteration".into(),
        iterations: config.max_iters,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// `Q_MDP(b, a) = Σ_s b(s) Q*(s, a)`.
pub fn qmdp(values: &MdpValues, b: &Belief) -> Vec<f64> {
    let na = values.q.first().map_or(0, Vec::len);
    let mut out = vec![0.0; na];
    for (s, p) in b.support() {
        for (o, q) in out.iter_mut().zip(&values.q[s]) {
            *o += p * q;
        }
    }
    out
}

/// `(successor, probability)` pairs emitting one observation.
type Group = Vec<(usize, f64)>;

/// Successors of each `(s, a)` grouped by the observation they emit.
fn observation_groups(model: &ConcretePomdp) -> Vec<Vec<Vec<Group>>> {
    (0..model.num_states())
        .map(|s| {
            (0..model.num_actions())
                .map(|a| {
                    let mut row: Vec<(usize, usize, f64)> = model
                        .row(s, a)
                        .iter()
                        .map(|&(t, p)| (model.observation(t), t, p))
                        .collect();
                    row.sort_by_key(|&(z, t, _)| (z, t));
                    let mut groups: Vec<Vec<(usize, f64)>> = Vec::new();
                    let mut last = usize::MAX;
                    for (z, t, p) in row {
                        if z != last {
                            groups.push(Vec::new());
                            last = z;
                        }
                        groups.last_mut().unwrap().push((t, p));
                    }
                    groups
                })
                .collect()
        })
        .collect()
}

/// Fast informed bound alpha vectors,
/// `α^a(s) = C(s, a) + Σ_z min_{a'} Σ_{s'} T(s' | s, a) [O(s') = z] α^{a'}(s')`,
/// iterated from zero.
pub fn solve_fib(model: &ConcretePomdp, config: &SolverConfig) -> Result<FibVectors> {
    let ns = model.num_states();
    let na = model.num_actions();
    let finite = almost_sure_states(model);
    let groups = observation_groups(model);
    // alpha[a][s]; entries whose MDP action value is infinite stay infinite.
    let mut alpha = vec![vec![0.0; ns]; na];
    for s in 0..ns {
        for a in 0..na {
            let row = model.row(s, a);
            let ok = model.is_goal(s) || (!row.is_empty() && row.iter().all(|&(t, _)| finite[t]));
            if !ok || !finite[s] {
                alpha[a][s] = f64::INFINITY;
            }
        }
    }
    let mut residual = f64::INFINITY;
    for iter in 1..=config.max_iters {
        let mut next = alpha.clone();
        residual = 0.0;
        for s in 0..ns {
            if model.is_goal(s) {
                continue;
            }
            for a in 0..na {
                if alpha[a][s].is_infinite() {
                    continue;
                }
                let mut total = model.cost(s, a);
                for group in &groups[s][a] {
                    let best = (0..na)
                        .map(|b| expected(group, &alpha[b]))
                        .fold(f64::INFINITY, f64::min);
                    total += best;
                }
                if total > DIVERGENCE_CAP || total.is_nan() {
                    return Err(Error::Divergence {
                        context: "fast informed bound iteration".into(),
                        cap: DIVERGENCE_CAP,
                    });
                }
                residual = residual.max((total - alpha[a][s]).abs());
                next[a][s] = total;
            }
        }
        alpha = next;
        if residual < config.tol {
            return Ok(FibVectors {
                alpha,
                iterations: iter,
            });
        }
    }
    Err(Error::NotConverged {
        context: "fast informed bound iteration".into(),
        iterations: config.max_iters,
        residual,
    })
}

/// `Q_FIB(b, a) = Σ_s b(s) α^a(s)`.
pub fn fib(vectors: &FibVectors, b: &Belief) -> Vec<f64> {
    vectors
        .alpha
        .iter()
        .map(|alpha| b.support().map(|(s, p)| p * alpha[s]).sum())
        .collect()
}

/// Dirac distribution on the minimizing action, ties to the lowest index.
pub fn supervision_policy(q_values: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (a, &q) in q_values.iter().enumerate() {
        if q < q_values[best] {
            best = a;
        }
    }
    let mut dist = vec![0.0; q_values.len()];
    if !dist.is_empty() {
        dist[best] = 1.0;
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupervisionKind {
    Qmdp,
    Fib,
}

/// Solved belief-based action values for one concrete POMDP.
#[derive(Debug, Clone)]
pub enum Supervisor {
    Qmdp(MdpValues),
    Fib(FibVectors),
}

impl Supervisor {
    pub fn solve(model: &ConcretePomdp, kind: SupervisionKind, config: &SolverConfig) -> Result<Self> {
        Ok(match kind {
            SupervisionKind::Qmdp => Supervisor::Qmdp(solve_mdp(model, config)?),
            SupervisionKind::Fib => Supervisor::Fib(solve_fib(model, config)?),
        })
    }

    pub fn q_values(&self, b: &Belief) -> Vec<f64> {
        match self {
            Supervisor::Qmdp(v) => qmdp(v, b),
            Supervisor::Fib(f) => fib(f, b),
        }
    }

    pub fn action_distribution(&self, b: &Belief) -> Vec<f64> {
        supervision_policy(&self.q_values(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PomdpBuilder;

    #[test]
    fn single_step_chain() {
        let mut b = PomdpBuilder::<f64>::new(2, 1, 1);
        b.observation(0, 0).unwrap().observation(1, 0).unwrap();
        b.transition(0, 0, 1, 1.0).unwrap().cost(0, 0, 1.0).unwrap();
        b.goal(1).unwrap().initial(0, 1.0).unwrap();
        let m = b.build().unwrap();
        let v = solve_mdp(&m, &SolverConfig::default()).unwrap();
        assert_eq!(v.v, vec![1.0, 0.0]);
    }

    #[test]
    fn cheaper_action_wins() {
        let mut b = PomdpBuilder::<f64>::new(2, 2, 1);
        b.observation(0, 0).unwrap().observation(1, 0).unwrap();
        b.transition(0, 0, 1, 1.0).unwrap().cost(0, 0, 1.0).unwrap();
        b.transition(0, 1, 1, 1.0).unwrap().cost(0, 1, 5.0).unwrap();
        b.goal(1).unwrap().initial(0, 1.0).unwrap();
        let m = b.build().unwrap();
        let v = solve_mdp(&m, &SolverConfig::default()).unwrap();
        assert_eq!(v.v[0], 1.0);
        let dist = supervision_policy(&qmdp(&v, &Belief::dirac(2, 0)));
        assert_eq!(dist, vec![1.0, 0.0]);
    }

    #[test]
    fn trapped_states_are_infinite() {
        // State 1 loops forever under its only action.
        let mut b = PomdpBuilder::<f64>::new(3, 2, 1);
        for s in 0..3 {
            b.observation(s, 0).unwrap();
        }
        b.transition(0, 0, 1, 1.0).unwrap();
        b.transition(0, 1, 2, 0.5).unwrap().transition(0, 1, 0, 0.5).unwrap();
        b.transition(1, 0, 1, 1.0).unwrap().transition(1, 1, 1, 1.0).unwrap();
        for a in 0..2 {
            b.cost(0, a, 1.0).unwrap().cost(1, a, 1.0).unwrap();
        }
        b.goal(2).unwrap().initial(0, 1.0).unwrap();
        let m = b.build().unwrap();
        let v = solve_mdp(&m, &SolverConfig::default()).unwrap();
        assert!(v.v[1].is_infinite());
        assert!((v.v[0] - 2.0).abs() < 1e-8);
        assert!(v.q[0][0].is_infinite());
        let f = solve_fib(&m, &SolverConfig::default()).unwrap();
        assert!(f.alpha[0][0].is_infinite());
        assert!((f.alpha[1][0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        assert_eq!(supervision_policy(&[3.0, 1.0, 2.0]), vec![0.0, 1.0, 0.0]);
        assert_eq!(supervision_policy(&[1.0, 1.0, 5.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(
            supervision_policy(&[6.0, 2.0, 4.0]),
            supervision_policy(&[3.0, 1.0, 2.0])
        );
    }
}
