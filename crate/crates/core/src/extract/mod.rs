//! Extraction of a finite-state controller from a trained recurrent policy:
//! hidden states are discretized into memory nodes, and the controller's
//! tables are filled in by running the network's memory update from each
//! node's representative state.

pub mod kmeans;
pub mod qbn;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans_fit, KMeans};
pub use qbn::{qbn_fit_posthoc, qbn_train, Code, Qbn, QbnParams, QbnTrainConfig, QuantLevels};

use crate::error::{Error, Result};
use crate::model::{Fsc, RobustPomdp};
use crate::policy::{HiddenState, NetworkParams};
use crate::sim::TrajectoryDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    Kmeans,
    QbnPosthoc,
    QbnE2e,
}

/// A discretization of the hidden-state space.
#[derive(Debug, Clone)]
pub enum Clustering {
    KMeans(KMeans),
    /// Stand-alone bottleneck trained on collected hidden states, with the
    /// codes seen on the dataset.
    Qbn {
        qbn: QbnParams,
        codes: Vec<Code>,
    },
    /// The bottleneck inside the network itself.
    Embedded {
        codes: Vec<Code>,
    },
}

impl Clustering {
    /// Number of nodes seen on the fitting data.
    pub fn size(&self) -> usize {
        match self {
            Clustering::KMeans(k) => k.centroids.len(),
            Clustering::Qbn { codes, .. } | Clustering::Embedded { codes } => codes.len(),
        }
    }
}

/// Hidden state after every step of every episode, in dataset order.
pub fn collect_hidden_states(params: &NetworkParams, dataset: &TrajectoryDataset) -> Vec<HiddenState> {
    dataset
        .episodes
        .iter()
        .flat_map(|e| params.replay(e))
        .map(|out| out.hidden)
        .collect()
}

fn distinct_sorted(codes: impl IntoIterator<Item = Code>) -> Vec<Code> {
    let mut v: Vec<Code> = codes.into_iter().collect();
    v.sort();
    v.dedup();
    v
}

pub fn qbn_clustering(qbn: QbnParams, points: &[HiddenState]) -> Clustering {
    let codes = distinct_sorted(points.iter().map(|h| qbn.encode(h)));
    Clustering::Qbn { qbn, codes }
}

/// Codes produced by the network's own bottleneck along the dataset.
pub fn embedded_clustering(params: &NetworkParams, dataset: &TrajectoryDataset) -> Result<Clustering> {
    if params.config.bottleneck.is_none() {
        return Err(Error::InvalidArgument("network has no bottleneck".into()));
    }
    let codes = dataset
        .episodes
        .iter()
        .flat_map(|e| params.replay(e))
        .filter_map(|out| out.code);
    Ok(Clustering::Embedded {
        codes: distinct_sorted(codes),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Initial,
    Centroid(usize),
    Code(Code),
}

/// Synthesizes a controller by a breadth-first walk over memory nodes from
/// the node of the zero hidden state: for each node and observation the
/// network is stepped from the node's representative, its output
/// distribution becomes the action map and the discretized successor state
/// the memory update. Nodes unreachable under realizable observations are
/// pruned.
pub fn build_fsc(params: &NetworkParams, clustering: &Clustering, model: &RobustPomdp) -> Result<Fsc> {
    if params.config.observations != model.num_observations() || params.config.actions != model.num_actions() {
        return Err(Error::InvalidArgument(
            "network does not match the model's observations or actions".into(),
        ));
    }
    let zero = params.initial_hidden();
    let key_of = |h: &[f64], code: Option<Code>| -> Key {
        match clustering {
            Clustering::KMeans(k) => Key::Centroid(k.assign(h)),
            Clustering::Qbn { qbn, .. } => Key::Code(qbn.encode(h)),
            Clustering::Embedded { .. } => Key::Code(code.expect("bottleneck networks report codes")),
        }
    };
    let represent = |key: &Key, fallback: &[f64]| -> HiddenState {
        match (clustering, key) {
            (Clustering::KMeans(k), Key::Centroid(i)) => k.centroids[*i].clone(),
            (Clustering::Qbn { qbn, .. }, Key::Code(c)) => qbn.decode(c),
            _ => fallback.to_vec(),
        }
    };
    let initial = match clustering {
        Clustering::Embedded { .. } => Key::Initial,
        _ => key_of(&zero, None),
    };
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut states: Vec<HiddenState> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(initial.clone(), 0);
    states.push(represent(&initial, &zero));
    queue.push_back(0);
    let mut action_map: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
    let mut memory_map: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(n) = queue.pop_front() {
        let h = states[n].clone();
        for z in 0..model.num_observations() {
            let out = params.forward(&h, z);
            let key = key_of(&out.hidden, out.code.clone());
            let next = match index.get(&key) {
                Some(&m) => m,
                None => {
                    let m = states.len();
                    states.push(represent(&key, &out.hidden));
                    index.insert(key, m);
                    action_map.push(Vec::new());
                    memory_map.push(Vec::new());
                    queue.push_back(m);
                    m
                }
            };
            action_map[n].push(out.probs);
            memory_map[n].push(next);
        }
    }
    let fsc = Fsc::new(0, action_map, memory_map)?;
    Ok(fsc.prune(&model.realizable_observations()))
}

/// Mean total-variation distance between the controller's action
/// distribution and the network's along the dataset histories.
pub fn fidelity(params: &NetworkParams, fsc: &Fsc, dataset: &TrajectoryDataset) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for episode in &dataset.episodes {
        let mut n = fsc.initial_node();
        for (step, out) in episode.steps.iter().zip(params.replay(episode)) {
            let delta = fsc.action_distribution(n, step.observation);
            total += 0.5 * delta.iter().zip(&out.probs).map(|(a, b)| (a - b).abs()).sum::<f64>();
            count += 1;
            n = fsc.next_node(n, step.observation);
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
