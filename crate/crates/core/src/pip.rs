//! Pessimistic iterative planning: train a recurrent policy on one member of
//! the uncertainty set, extract a controller, evaluate it against the whole
//! set, and move on to the member that is worst for that controller.
//! Baselines replace the last step by a fixed or random member.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{select_worst_case, AdversaryConfig, NodeSum};
use crate::error::{Error, Result};
use crate::extract::{
    build_fsc, collect_hidden_states, embedded_clustering, fidelity, kmeans_fit, qbn_clustering, qbn_fit_posthoc,
    Clustering, ExtractorKind, QbnTrainConfig, QuantLevels,
};
use crate::io::serialize_fsc;
use crate::model::{bound_member, nominal_midpoint, sample_member, Bound, ConcretePomdp, Fsc, RobustPomdp};
use crate::policy::{loss, train_epochs, Bottleneck, NetConfig, NetworkParams, TrainConfig};
use crate::robust::{evaluate_fsc_with, Materialize, Mode, ViConfig};
use crate::sim::{simulate, SimConfig};
use crate::supervision::{SolverConfig, SupervisionKind, Supervisor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pip,
    BaselineNominal,
    BaselineLower,
    BaselineUpper,
    BaselineRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub supervision: SupervisionKind,
    pub extractor: ExtractorKind,
    pub iterations: usize,
    pub episodes: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub clusters: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub kmeans_iters: usize,
    pub qbn_code: usize,
    pub qbn_levels: QuantLevels,
    pub qbn_epochs: usize,
    pub solver: SolverConfig,
    pub evaluation: ViConfig,
    pub adversary: AdversaryConfig,
    /// Stop once the best robust value is at most this.
    pub target_value: Option<f64>,
    /// When false, `wall_ms` is written as 0 so that runs are byte-identical.
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Pip,
            supervision: SupervisionKind::Qmdp,
            extractor: ExtractorKind::Kmeans,
            iterations: 50,
            episodes: 256,
            horizon: 200,
            hidden: 16,
            clusters: 9,
            epochs: 8,
            batch_size: 32,
            lr: 1e-3,
            clip_norm: 5.0,
            seed: 0,
            kmeans_iters: 100,
            qbn_code: 2,
            qbn_levels: QuantLevels::Three,
            qbn_epochs: 50,
            solver: SolverConfig::default(),
            evaluation: ViConfig::default(),
            adversary: AdversaryConfig::default(),
            target_value: None,
            record_timing: true,
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        let counts = [
            ("episodes", self.episodes),
            ("horizon", self.horizon),
            ("hidden", self.hidden),
            ("clusters", self.clusters),
            ("batch size", self.batch_size),
            ("QBN code size", self.qbn_code),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.lr >= 0.0 && self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be >= 0 and clip norm > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    /// k-means inertia, QBN reconstruction MSE, or the number of distinct
    /// codes for the embedded bottleneck.
    pub extract_metric: f64,
    pub fsc_nodes: usize,
    pub robust_value: f64,
    pub best_robust_value: f64,
    pub wall_ms: u64,
    /// Mean total-variation distance between controller and network.
    pub fidelity: f64,
    /// Fingerprint of the member trained on.
    pub member: String,
}

pub const CSV_HEADER: &str = "iteration,train_loss,extract_metric,fsc_nodes,robust_value,best_robust_value,wall_ms";

#[derive(Debug, Clone)]
pub struct RunResult {
    /// `None` when no iteration ran.
    pub best_fsc: Option<Fsc>,
    pub best_value: f64,
    pub records: Vec<IterationRecord>,
    pub params: Option<NetworkParams>,
}

impl RunResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CSV_HEADER}");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{},{:?},{:?},{}",
                r.iteration,
                r.train_loss,
                r.extract_metric,
                r.fsc_nodes,
                r.robust_value,
                r.best_robust_value,
                r.wall_ms
            );
        }
        out
    }
}

fn initial_member(model: &RobustPomdp, method: Method, rng: &mut ChaCha8Rng) -> Result<ConcretePomdp> {
    match method {
        Method::Pip | Method::BaselineNominal => nominal_midpoint(model),
        Method::BaselineLower => bound_member(model, Bound::Lower),
        Method::BaselineUpper => bound_member(model, Bound::Upper),
        Method::BaselineRandom => sample_member(model, rng.random()),
    }
}

fn extract(
    config: &RunConfig,
    params: &NetworkParams,
    dataset: &crate::sim::TrajectoryDataset,
    seed: u64,
) -> Result<(Clustering, f64)> {
    let mut points = collect_hidden_states(params, dataset);
    if points.is_empty() {
        points.push(params.initial_hidden());
    }
    Ok(match config.extractor {
        ExtractorKind::Kmeans => {
            let km = kmeans_fit(&points, config.clusters, seed, config.kmeans_iters)?;
            let inertia = km.inertia;
            (Clustering::KMeans(km), inertia)
        }
        ExtractorKind::QbnPosthoc => {
            let cfg = QbnTrainConfig {
                code: config.qbn_code,
                levels: config.qbn_levels,
                epochs: config.qbn_epochs,
                batch_size: config.batch_size,
                lr: config.lr,
                clip_norm: config.clip_norm,
                seed,
            };
            let (qbn, trace) = qbn_fit_posthoc(&points, &cfg)?;
            let mse = trace.last().copied().unwrap_or_else(|| qbn.mse(&points));
            (qbn_clustering(qbn, &points), mse)
        }
        ExtractorKind::QbnE2e => {
            let c = embedded_clustering(params, dataset)?;
            let n = c.size() as f64;
            (c, n)
        }
    })
}

/// Runs the planning loop on `model`.
pub fn run(config: &RunConfig, model: &RobustPomdp) -> Result<RunResult> {
    config.check()?;
    model.validate().into_result()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net_config = NetConfig::new(model.num_observations(), model.num_actions());
    net_config.hidden = config.hidden;
    if config.extractor == ExtractorKind::QbnE2e {
        net_config.bottleneck = Some(Bottleneck {
            code: config.qbn_code,
            levels: config.qbn_levels,
        });
    }
    let mut params = NetworkParams::init(net_config, rng.random());
    let mut member = initial_member(model, config.method, &mut rng)?;
    let materialize = if config.method == Method::Pip && config.adversary.node_sum == NodeSum::All {
        Materialize::All
    } else {
        Materialize::Reachable
    };
    let mut best: Option<(Fsc, f64)> = None;
    let mut records = Vec::new();
    for iteration in 0..config.iterations {
        let started = Instant::now();
        let sim_seed: u64 = rng.random();
        let train_seed: u64 = rng.random();
        let extract_seed: u64 = rng.random();
        let member_seed: u64 = rng.random();
        let wrap = |e: Error| Error::Iteration {
            iteration,
            source: Box::new(e),
        };
        let mut step = || -> Result<(IterationRecord, Fsc, Option<ConcretePomdp>)> {
            let supervisor = Supervisor::solve(&member, config.supervision, &config.solver)?;
            let sim = SimConfig {
                episodes: config.episodes,
                horizon: config.horizon,
                seed: sim_seed,
                record_beliefs: false,
            };
            let dataset = simulate(&member, &supervisor, &sim)?;
            let train = TrainConfig {
                epochs: config.epochs,
                batch_size: config.batch_size,
                lr: config.lr,
                clip_norm: config.clip_norm,
                seed: train_seed,
            };
            train_epochs(&mut params, &dataset, &train)?;
            let train_loss = loss(&params, &dataset);
            let (clustering, metric) = extract(config, &params, &dataset, extract_seed)?;
            let fsc = build_fsc(&params, &clustering, model)?;
            let values = evaluate_fsc_with(model, &fsc, Mode::Pessimistic, &config.evaluation, materialize)?;
            let next = match config.method {
                Method::Pip => Some(select_worst_case(model, &fsc, &values, &config.adversary)?.worst_case),
                Method::BaselineRandom => Some(sample_member(model, member_seed)?),
                _ => None,
            };
            let record = IterationRecord {
                iteration,
                train_loss,
                extract_metric: metric,
                fsc_nodes: fsc.num_nodes(),
                robust_value: values.value,
                best_robust_value: values.value,
                wall_ms: 0,
                fidelity: fidelity(&params, &fsc, &dataset),
                member: member.fingerprint(),
            };
            Ok((record, fsc, next))
        };
        let (mut record, fsc, next) = step().map_err(wrap)?;
        if best.as_ref().is_none_or(|(_, v)| record.robust_value < *v) {
            best = Some((fsc, record.robust_value));
        }
        let best_value = best.as_ref().map_or(f64::INFINITY, |(_, v)| *v);
        record.best_robust_value = best_value;
        if config.record_timing {
            record.wall_ms = started.elapsed().as_millis() as u64;
        }
        records.push(record);
        if let Some(m) = next {
            member = m;
        }
        if config.target_value.is_some_and(|t| best_value <= t) {
            break;
        }
    }
    let (best_fsc, best_value) = match best {
        Some((f, v)) => (Some(f), v),
        None => (None, f64::INFINITY),
    };
    let params = (!records.is_empty()).then_some(params);
    Ok(RunResult {
        best_fsc,
        best_value,
        records,
        params,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub config: RunConfig,
    pub iterations_run: usize,
    /// `null` when no controller was produced or none has a finite value.
    pub best_robust_value: Option<f64>,
    pub best_fsc_path: Option<PathBuf>,
    /// How midpoints and sampled entries are pushed back onto the simplex.
    pub projection: String,
}

/// Writes `iterations.csv`, `summary.json` and, when a controller exists,
/// `best.fsc` and `policy.ckpt` into `dir`.
pub fn write_outputs(dir: &Path, config: &RunConfig, result: &RunResult) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("iterations.csv"), result.to_csv())?;
    let best_fsc_path = match &result.best_fsc {
        Some(fsc) => {
            let p = dir.join("best.fsc");
            std::fs::write(&p, serialize_fsc(fsc))?;
            Some(p)
        }
        None => None,
    };
    if let Some(params) = &result.params {
        std::fs::write(dir.join("policy.ckpt"), params.to_checkpoint())?;
    }
    let summary = Summary {
        config: config.clone(),
        iterations_run: result.records.len(),
        best_robust_value: result.best_value.is_finite().then_some(result.best_value),
        best_fsc_path,
        projection: "clamp then proportional slack filling".into(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}
