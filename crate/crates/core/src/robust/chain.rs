use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Fsc, Interval, Pomdp, Weight};

/// Product of model states and controller nodes. Transition weights are the
/// interval sums `Σ_a δ(a | n, O(s)) · T(s, a)(s')`; only product states
/// reachable from the initial distribution are materialized.
#[derive(Debug, Clone)]
pub struct RobustChain {
    num_model_states: usize,
    num_nodes: usize,
    states: Vec<(usize, usize)>,
    index: Vec<usize>,
    initial: Vec<(usize, f64)>,
    successors: Vec<Vec<(usize, Interval)>>,
    cost: Vec<f64>,
    goal: Vec<bool>,
}

const ABSENT: usize = usize::MAX;

impl RobustChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_model_states(&self) -> usize {
        self.num_model_states
    }

    /// `(model state, controller node)` of chain state `i`.
    pub fn state(&self, i: usize) -> (usize, usize) {
        self.states[i]
    }

    pub fn index_of(&self, s: usize, n: usize) -> Option<usize> {
        match self.index[s * self.num_nodes + n] {
            ABSENT => None,
            i => Some(i),
        }
    }

    /// Initial distribution `b0(s) [n = n0]` as `(chain state, probability)`.
    pub fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn successors(&self, i: usize) -> &[(usize, Interval)] {
        &self.successors[i]
    }

    pub fn cost(&self, i: usize) -> f64 {
        self.cost[i]
    }

    pub fn is_goal(&self, i: usize) -> bool {
        self.goal[i]
    }

    pub(crate) fn dense_index(&self) -> &[usize] {
        &self.index
    }
}

/// Which product states a chain contains.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Materialize {
    /// Only states reachable from the initial distribution.
    #[default]
    Reachable,
    /// Every `(s, n)` pair, in index order `s * |N| + n`.
    All,
}

/// Builds the product chain of `model` and `fsc` over the reachable product
/// states. Works for both the uncertain model and its concrete members
/// (point intervals).
pub fn build_chain<P: Weight>(model: &Pomdp<P>, fsc: &Fsc) -> Result<RobustChain> {
    build_chain_with(model, fsc, Materialize::Reachable)
}

pub fn build_chain_with<P: Weight>(model: &Pomdp<P>, fsc: &Fsc, which: Materialize) -> Result<RobustChain> {
    fsc.check_compatible(model)?;
    let nn = fsc.num_nodes();
    let mut chain = RobustChain {
        num_model_states: model.num_states(),
        num_nodes: nn,
        states: Vec::new(),
        index: vec![ABSENT; model.num_states() * nn],
        initial: Vec::new(),
        successors: Vec::new(),
        cost: Vec::new(),
        goal: Vec::new(),
    };
    let mut queue = VecDeque::new();
    let intern = |chain: &mut RobustChain, queue: &mut VecDeque<usize>, s: usize, n: usize| {
        let key = s * nn + n;
        if chain.index[key] == ABSENT {
            chain.index[key] = chain.states.len();
            chain.states.push((s, n));
            queue.push_back(chain.index[key]);
        }
        chain.index[key]
    };
    if which == Materialize::All {
        for s in 0..model.num_states() {
            for n in 0..nn {
                intern(&mut chain, &mut queue, s, n);
            }
        }
    }
    for (s, &p) in model.initial_belief().iter().enumerate() {
        if p > 0.0 {
            let i = intern(&mut chain, &mut queue, s, fsc.initial_node());
            chain.initial.push((i, p));
        }
    }
    let mut scratch: Vec<(usize, Interval)> = Vec::new();
    let mut built = Vec::new();
    while let Some(i) = queue.pop_front() {
        let (s, n) = chain.states[i];
        if model.is_goal(s) {
            built.push((i, Vec::new(), 0.0, true));
            continue;
        }
        let z = model.observation(s);
        let next = fsc.next_node(n, z);
        let dist = fsc.action_distribution(n, z);
        scratch.clear();
        let mut cost = 0.0;
        for (a, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            cost += w * model.cost(s, a);
            for &(t, p) in model.row(s, a) {
                scratch.push((t, p.as_interval().scale(w)));
            }
        }
        scratch.sort_by_key(|(t, _)| *t);
        let mut row: Vec<(usize, Interval)> = Vec::with_capacity(scratch.len());
        for &(t, iv) in scratch.iter() {
            match row.last_mut() {
                Some((u, acc)) if *u == t => *acc += iv,
                _ => row.push((t, iv)),
            }
        }
        let row = row
            .into_iter()
            .filter(|(_, iv)| iv.hi > 0.0)
            .map(|(t, iv)| (intern(&mut chain, &mut queue, t, next), iv))
            .collect();
        built.push((i, row, cost, false));
    }
    built.sort_by_key(|b| b.0);
    for (_, row, cost, goal) in built {
        chain.successors.push(row);
        chain.cost.push(cost);
        chain.goal.push(goal);
    }
    Ok(chain)
}
