//! Belief-tracked simulation of the supervision policy.
//!
//! Every episode draws from its own ChaCha stream selected by the episode
//! index, so a dataset depends only on the model, the supervisor and the seed.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{belief_update, Belief, ConcretePomdp};
use crate::supervision::Supervisor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub record_beliefs: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            episodes: 256,
            horizon: 200,
            seed: 0,
            record_beliefs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub observation: usize,
    pub action: usize,
    /// Supervision distribution the action was drawn from.
    pub target: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub belief: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
    /// Realized cumulative cost.
    pub cost: f64,
    pub reached_goal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub model_hash: String,
    pub episodes: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub meta: DatasetMeta,
    pub episodes: Vec<Episode>,
}

impl TrajectoryDataset {
    pub fn num_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.steps.len()).sum()
    }

    pub fn mean_cost(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.cost).sum::<f64>() / self.episodes.len() as f64
    }

    /// Line-delimited JSON: the metadata record, then one record per episode.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let line = serde_json::to_string(&self.meta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writeln!(out, "{line}")?;
        for episode in &self.episodes {
            let line = serde_json::to_string(episode).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn draw(weights: impl IntoIterator<Item = f64>, rng: &mut ChaCha8Rng) -> Result<usize> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(format!("cannot sample: {e}")))?;
    Ok(dist.sample(rng))
}

/// The initial belief conditioned on the first observation.
fn condition(model: &ConcretePomdp, z: usize) -> Result<Belief> {
    let mut b: Vec<f64> = model
        .initial_belief()
        .iter()
        .enumerate()
        .map(|(s, &p)| if model.observation(s) == z { p } else { 0.0 })
        .collect();
    let total: f64 = b.iter().sum();
    b.iter_mut().for_each(|p| *p /= total);
    Belief::new(b)
}

pub fn simulate_episode(
    model: &ConcretePomdp,
    supervisor: &Supervisor,
    horizon: usize,
    record_beliefs: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let mut s = draw(model.initial_belief().iter().copied(), rng)?;
    let mut z = model.observation(s);
    let mut belief = condition(model, z)?;
    let mut steps = Vec::new();
    let mut cost = 0.0;
    while steps.len() < horizon && !model.is_goal(s) {
        let target = supervisor.action_distribution(&belief);
        let a = draw(target.iter().copied(), rng)?;
        cost += model.cost(s, a);
        steps.push(Step {
            observation: z,
            action: a,
            target,
            belief: record_beliefs.then(|| belief.probabilities().to_vec()),
        });
        let row = model.row(s, a);
        s = row[draw(row.iter().map(|(_, p)| *p), rng)?].0;
        z = model.observation(s);
        belief = belief_update(model, &belief, a, z)?;
    }
    Ok(Episode {
        steps,
        cost,
        reached_goal: model.is_goal(s),
    })
}

/// Simulates `config.episodes` episodes of the supervision policy, stopping
/// each at the horizon or on entering a goal.
pub fn simulate(model: &ConcretePomdp, supervisor: &Supervisor, config: &SimConfig) -> Result<TrajectoryDataset> {
    let episodes = (0..config.episodes)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            simulate_episode(model, supervisor, config.horizon, config.record_beliefs, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        meta: DatasetMeta {
            seed: config.seed,
            model_hash: model.fingerprint(),
            episodes: config.episodes,
            horizon: config.horizon,
        },
        episodes,
    })
}
