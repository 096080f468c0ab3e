use serde::{Deserialize, Serialize};

use super::pomdp::ConcretePomdp;
use super::PROB_TOL;
use crate::error::{Error, Result};

/// Probability distribution over the states of a POMDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        let sum: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidArgument(format!(
                "belief must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        Ok(Belief(probabilities))
    }

    pub fn dirac(num_states: usize, s: usize) -> Self {
        let mut p = vec![0.0; num_states];
        p[s] = 1.0;
        Belief(p)
    }

    pub fn uniform(num_states: usize) -> Self {
        Belief(vec![1.0 / num_states as f64; num_states])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Nonzero entries as `(state, probability)`.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().copied().enumerate().filter(|(_, p)| *p > 0.0)
    }
}

/// Bayes filter for deterministic observations:
/// `b'(s') ∝ [O(s') = z] Σ_s b(s) T(s' | s, a)`.
pub fn belief_update(model: &ConcretePomdp, b: &Belief, a: usize, z: usize) -> Result<Belief> {
    let mut next = vec![0.0; model.num_states()];
    for (s, p) in b.support() {
        for &(t, q) in model.row(s, a) {
            if model.observation(t) == z {
                next[t] += p * q;
            }
        }
    }
    let norm: f64 = next.iter().sum();
    if !(norm > 0.0) {
        return Err(Error::InconsistentHistory {
            action: a,
            observation: z,
        });
    }
    for x in &mut next {
        *x /= norm;
    }
    Ok(Belief(next))
}
