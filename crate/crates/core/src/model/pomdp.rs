use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::interval::{Interval, Weight};
use super::validate::{validate, ValidationReport};
use crate::error::{Error, Result};

/// Sparse successor list, sorted by successor index.
pub type Row<P> = Vec<(usize, P)>;

/// POMDP with deterministic state-based observations and a goal set.
///
/// `P` is [`Interval`] for the uncertain model and `f64` for a concrete
/// member of its uncertainty set. Goal states are absorbing with zero cost
/// under every action; the builder enforces this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pomdp<P> {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    obs_of: Vec<usize>,
    transitions: Vec<Vec<Row<P>>>,
    cost: Vec<Vec<f64>>,
    goals: Vec<bool>,
    initial_belief: Vec<f64>,
}

pub type RobustPomdp = Pomdp<Interval>;
pub type ConcretePomdp = Pomdp<f64>;

impl<P: Weight> Pomdp<P> {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn observation(&self, s: usize) -> usize {
        self.obs_of[s]
    }

    pub fn observations(&self) -> &[usize] {
        &self.obs_of
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, P)] {
        &self.transitions[s][a]
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s][a]
    }

    pub fn is_goal(&self, s: usize) -> bool {
        self.goals[s]
    }

    pub fn goals(&self) -> impl Iterator<Item = usize> + '_ {
        self.goals.iter().enumerate().filter(|(_, g)| **g).map(|(s, _)| s)
    }

    pub fn initial_belief(&self) -> &[f64] {
        &self.initial_belief
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Applies `f` to every row, keeping the sparsity pattern.
    pub fn try_map_rows<Q: Weight>(
        &self,
        mut f: impl FnMut(usize, usize, &[(usize, P)]) -> Result<Vec<Q>>,
    ) -> Result<Pomdp<Q>> {
        let mut transitions = Vec::with_capacity(self.num_states);
        for s in 0..self.num_states {
            let mut rows = Vec::with_capacity(self.num_actions);
            for a in 0..self.num_actions {
                let row = &self.transitions[s][a];
                let weights = f(s, a, row)?;
                debug_assert_eq!(weights.len(), row.len());
                rows.push(row.iter().map(|(t, _)| *t).zip(weights).collect());
            }
            transitions.push(rows);
        }
        Ok(Pomdp {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_observations: self.num_observations,
            obs_of: self.obs_of.clone(),
            transitions,
            cost: self.cost.clone(),
            goals: self.goals.clone(),
            initial_belief: self.initial_belief.clone(),
        })
    }

    /// States reachable from the support of the initial belief under any action.
    pub fn reachable_states(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states];
        let mut queue = VecDeque::new();
        for (s, &p) in self.initial_belief.iter().enumerate() {
            if p > 0.0 {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for row in &self.transitions[s] {
                for &(t, _) in row {
                    if !seen[t] {
                        seen[t] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
        seen
    }

    /// Hex SHA-256 of the model's JSON encoding.
    pub fn fingerprint(&self) -> String
    where
        P: Serialize,
    {
        let bytes = serde_json::to_vec(self).expect("models always serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Observations emitted by some reachable state.
    pub fn realizable_observations(&self) -> Vec<bool> {
        let mut out = vec![false; self.num_observations];
        for (s, reach) in self.reachable_states().into_iter().enumerate() {
            if reach {
                out[self.obs_of[s]] = true;
            }
        }
        out
    }
}

impl RobustPomdp {
    /// The unique member when every interval is a point.
    pub fn point_member(&self) -> Option<ConcretePomdp> {
        if !self.transitions.iter().flatten().flatten().all(|(_, iv)| iv.is_point()) {
            return None;
        }
        self.try_map_rows(|_, _, row| Ok(row.iter().map(|(_, iv)| iv.lo).collect()))
            .ok()
    }
}

impl ConcretePomdp {
    /// The same model with every probability as a point interval.
    pub fn to_robust(&self) -> RobustPomdp {
        self.try_map_rows(|_, _, row| Ok(row.iter().map(|&(_, p)| Interval::point(p)).collect()))
            .expect("point rows always map")
    }

    /// Membership in the uncertainty set of `parent`: same sparsity pattern,
    /// every probability inside its interval and every row a distribution.
    pub fn is_member_of(&self, parent: &RobustPomdp, tol: f64) -> bool {
        if self.num_states != parent.num_states
            || self.num_actions != parent.num_actions
            || self.obs_of != parent.obs_of
        {
            return false;
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = &self.transitions[s][a];
                let boxes = &parent.transitions[s][a];
                if row.len() != boxes.len() {
                    return false;
                }
                let mut sum = 0.0;
                for (&(t, p), &(u, iv)) in row.iter().zip(boxes) {
                    if t != u || !iv.contains(p, tol) {
                        return false;
                    }
                    sum += p;
                }
                if !row.is_empty() && (sum - 1.0).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Incremental constructor used by the parser and the grid generators.
#[derive(Debug, Clone)]
pub struct PomdpBuilder<P> {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    obs_of: Vec<Option<usize>>,
    transitions: Vec<Vec<Row<P>>>,
    cost: Vec<Vec<f64>>,
    goals: Vec<bool>,
    initial_belief: Vec<f64>,
}

impl<P: Weight> PomdpBuilder<P> {
    pub fn new(num_states: usize, num_actions: usize, num_observations: usize) -> Self {
        PomdpBuilder {
            num_states,
            num_actions,
            num_observations,
            obs_of: vec![None; num_states],
            transitions: vec![vec![Vec::new(); num_actions]; num_states],
            cost: vec![vec![0.0; num_actions]; num_states],
            goals: vec![false; num_states],
            initial_belief: vec![0.0; num_states],
        }
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::Structure(format!(
                "state {s} out of range (model has {} states)",
                self.num_states
            )));
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.num_actions {
            return Err(Error::Structure(format!(
                "action {a} out of range (model has {} actions)",
                self.num_actions
            )));
        }
        Ok(())
    }

    pub fn observation(&mut self, s: usize, z: usize) -> Result<&mut Self> {
        self.check_state(s)?;
        if z >= self.num_observations {
            return Err(Error::Structure(format!(
                "observation {z} out of range (model has {} observations)",
                self.num_observations
            )));
        }
        if let Some(prev) = self.obs_of[s] {
            if prev != z {
                return Err(Error::Structure(format!("state {s} already emits observation {prev}")));
            }
        }
        self.obs_of[s] = Some(z);
        Ok(self)
    }

    pub fn transition(&mut self, s: usize, a: usize, t: usize, w: P) -> Result<&mut Self> {
        self.check_state(s)?;
        self.check_action(a)?;
        self.check_state(t)?;
        let row = &mut self.transitions[s][a];
        if row.iter().any(|(u, _)| *u == t) {
            return Err(Error::Structure(format!("duplicate transition {s} --{a}--> {t}")));
        }
        row.push((t, w));
        Ok(self)
    }

    pub fn cost(&mut self, s: usize, a: usize, c: f64) -> Result<&mut Self> {
        self.check_state(s)?;
        self.check_action(a)?;
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Structure(format!(
                "cost of ({s}, {a}) must be finite and nonnegative, got {c}"
            )));
        }
        self.cost[s][a] = c;
        Ok(self)
    }

    pub fn goal(&mut self, s: usize) -> Result<&mut Self> {
        self.check_state(s)?;
        self.goals[s] = true;
        Ok(self)
    }

    pub fn initial(&mut self, s: usize, p: f64) -> Result<&mut Self> {
        self.check_state(s)?;
        self.initial_belief[s] = p;
        Ok(self)
    }

    /// Finishes construction. Goal rows are replaced by zero-cost self-loops.
    /// Semantic checks (interval bounds, feasibility, sinks) are left to
    /// [`Pomdp::validate`].
    pub fn build(self) -> Result<Pomdp<P>> {
        if self.num_states == 0 || self.num_actions == 0 || self.num_observations == 0 {
            return Err(Error::Structure(
                "states, actions and observations must all be nonempty".into(),
            ));
        }
        let obs_of = self
            .obs_of
            .iter()
            .enumerate()
            .map(|(s, z)| z.ok_or_else(|| Error::Structure(format!("state {s} has no observation"))))
            .collect::<Result<Vec<_>>>()?;
        let mut transitions = self.transitions;
        let mut cost = self.cost;
        for s in 0..self.num_states {
            if self.goals[s] {
                for a in 0..self.num_actions {
                    transitions[s][a] = vec![(s, P::certain(1.0))];
                    cost[s][a] = 0.0;
                }
            } else {
                for row in &mut transitions[s] {
                    row.sort_by_key(|(t, _)| *t);
                }
            }
        }
        Ok(Pomdp {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_observations: self.num_observations,
            obs_of,
            transitions,
            cost,
            goals: self.goals,
            initial_belief: self.initial_belief,
        })
    }
}
