use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::interval::Weight;
use super::pomdp::Pomdp;
use super::PROB_TOL;
use crate::error::{Error, Result};

/// Finite-state controller: memory nodes, a stochastic action map
/// `(node, observation) -> Δ(actions)` and a deterministic memory update
/// `(node, observation) -> node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fsc {
    num_nodes: usize,
    num_observations: usize,
    num_actions: usize,
    initial_node: usize,
    action_map: Vec<Vec<Vec<f64>>>,
    memory_map: Vec<Vec<usize>>,
}

impl Fsc {
    /// `action_map[n][z]` is a distribution over actions and
    /// `memory_map[n][z]` the successor node.
    pub fn new(initial_node: usize, action_map: Vec<Vec<Vec<f64>>>, memory_map: Vec<Vec<usize>>) -> Result<Self> {
        let num_nodes = action_map.len();
        if num_nodes == 0 || memory_map.len() != num_nodes {
            return Err(Error::Controller(
                "action and memory maps must cover the same nonempty node set".into(),
            ));
        }
        if initial_node >= num_nodes {
            return Err(Error::Controller(format!(
                "initial node {initial_node} out of range ({num_nodes} nodes)"
            )));
        }
        let num_observations = action_map[0].len();
        let num_actions = action_map[0].first().map_or(0, Vec::len);
        if num_observations == 0 || num_actions == 0 {
            return Err(Error::Controller("empty observation or action set".into()));
        }
        for n in 0..num_nodes {
            if action_map[n].len() != num_observations || memory_map[n].len() != num_observations {
                return Err(Error::Controller(format!(
                    "node {n} does not cover all {num_observations} observations"
                )));
            }
            for z in 0..num_observations {
                let dist = &action_map[n][z];
                if dist.len() != num_actions {
                    return Err(Error::Controller(format!(
                        "action distribution at ({n}, {z}) has {} entries, expected {num_actions}",
                        dist.len()
                    )));
                }
                let sum: f64 = dist.iter().sum();
                if dist.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::Controller(format!(
                        "action distribution at ({n}, {z}) sums to {sum}"
                    )));
                }
                if memory_map[n][z] >= num_nodes {
                    return Err(Error::Controller(format!(
                        "memory update at ({n}, {z}) points to node {} of {num_nodes}",
                        memory_map[n][z]
                    )));
                }
            }
        }
        Ok(Fsc {
            num_nodes,
            num_observations,
            num_actions,
            initial_node,
            action_map,
            memory_map,
        })
    }

    /// One-node controller playing `action_map[z]` on observation `z`.
    pub fn memoryless(action_map: Vec<Vec<f64>>) -> Result<Self> {
        let z = action_map.len();
        Fsc::new(0, vec![action_map], vec![vec![0; z]])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn initial_node(&self) -> usize {
        self.initial_node
    }

    pub fn action_distribution(&self, n: usize, z: usize) -> &[f64] {
        &self.action_map[n][z]
    }

    pub fn next_node(&self, n: usize, z: usize) -> usize {
        self.memory_map[n][z]
    }

    pub fn check_compatible<P: Weight>(&self, model: &Pomdp<P>) -> Result<()> {
        if self.num_observations != model.num_observations() || self.num_actions != model.num_actions() {
            return Err(Error::Controller(format!(
                "controller has {} observations and {} actions, model has {} and {}",
                self.num_observations,
                self.num_actions,
                model.num_observations(),
                model.num_actions()
            )));
        }
        Ok(())
    }

    /// Nodes reachable from the initial node through observations marked in
    /// `observations`.
    pub fn reachable_nodes(&self, observations: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes];
        seen[self.initial_node] = true;
        let mut queue = VecDeque::from([self.initial_node]);
        while let Some(n) = queue.pop_front() {
            for (z, &on) in observations.iter().enumerate() {
                if !on {
                    continue;
                }
                let m = self.memory_map[n][z];
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Drops nodes unreachable through `observations` and reindexes densely in
    /// order of first discovery. Updates on other observations that would
    /// leave the kept set are redirected to the source node itself.
    pub fn prune(&self, observations: &[bool]) -> Fsc {
        let mut order = vec![self.initial_node];
        let mut index = vec![usize::MAX; self.num_nodes];
        index[self.initial_node] = 0;
        let mut head = 0;
        while head < order.len() {
            let n = order[head];
            head += 1;
            for (z, &on) in observations.iter().enumerate() {
                let m = self.memory_map[n][z];
                if on && index[m] == usize::MAX {
                    index[m] = order.len();
                    order.push(m);
                }
            }
        }
        let action_map = order.iter().map(|&n| self.action_map[n].clone()).collect();
        let memory_map = order
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                self.memory_map[n]
                    .iter()
                    .map(|&m| if index[m] == usize::MAX { i } else { index[m] })
                    .collect()
            })
            .collect();
        Fsc {
            num_nodes: order.len(),
            num_observations: self.num_observations,
            num_actions: self.num_actions,
            initial_node: 0,
            action_map,
            memory_map,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized_rows_and_dangling_updates() {
        assert!(Fsc::new(0, vec![vec![vec![0.5, 0.4]]], vec![vec![0]]).is_err());
        assert!(Fsc::new(0, vec![vec![vec![1.0, 0.0]]], vec![vec![1]]).is_err());
        assert!(Fsc::new(1, vec![vec![vec![1.0, 0.0]]], vec![vec![0]]).is_err());
    }

    #[test]
    fn prune_keeps_reachable_nodes_only() {
        // Node 1 is never entered; node 2 is entered from 0 on observation 1.
        let dirac = vec![1.0, 0.0];
        let f = Fsc::new(
            0,
            vec![vec![dirac.clone(), dirac.clone()]; 3],
            vec![vec![0, 2], vec![1, 1], vec![2, 0]],
        )
        .unwrap();
        let p = f.prune(&[true, true]);
        assert_eq!(p.num_nodes(), 2);
        assert_eq!(p.next_node(0, 1), 1);
        assert_eq!(p.next_node(1, 1), 0);
        assert!(p.reachable_nodes(&[true, true]).iter().all(|r| *r));
    }

    #[test]
    fn prune_redirects_updates_on_unrealizable_observations() {
        let dirac = vec![1.0];
        let f = Fsc::new(
            0,
            vec![vec![dirac.clone(), dirac.clone()]; 2],
            vec![vec![0, 1], vec![1, 1]],
        )
        .unwrap();
        let p = f.prune(&[true, false]);
        assert_eq!(p.num_nodes(), 1);
        assert_eq!(p.next_node(0, 1), 0);
    }
}
