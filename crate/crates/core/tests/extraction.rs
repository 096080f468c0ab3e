mod common;

use std::collections::HashMap;

use common::*;
use rand::Rng;
use robust_fsc::extract::kmeans::{nearest, squared_distance, KMeans};
use robust_fsc::extract::{
    build_fsc, collect_hidden_states, embedded_clustering, kmeans_fit, qbn_clustering, qbn_fit_posthoc, Clustering,
    QbnTrainConfig, QuantLevels,
};
use robust_fsc::model::{Interval, PomdpBuilder, RobustPomdp};
use robust_fsc::policy::{Bottleneck, NetConfig, NetworkParams};
use robust_fsc::sim::{simulate, SimConfig};
use robust_fsc::supervision::{SolverConfig, SupervisionKind, Supervisor};

/// Corridor of `n` cells with two observations (even and odd cells); action
/// 1 moves right, action 0 stays.
fn corridor(n: usize) -> RobustPomdp {
    let mut b = PomdpBuilder::<Interval>::new(n, 2, 2);
    for s in 0..n {
        b.observation(s, s % 2).unwrap();
    }
    for s in 0..n - 1 {
        b.transition(s, 0, s, Interval::point(1.0)).unwrap();
        b.transition(s, 1, s, Interval::new(0.1, 0.3)).unwrap();
        b.transition(s, 1, s + 1, Interval::new(0.7, 0.9)).unwrap();
        b.cost(s, 0, 1.0).unwrap().cost(s, 1, 1.0).unwrap();
    }
    b.goal(n - 1).unwrap().initial(0, 1.0).unwrap();
    b.build().unwrap()
}

fn trajectories(model: &RobustPomdp, episodes: usize) -> robust_fsc::sim::TrajectoryDataset {
    let member = robust_fsc::model::nominal_midpoint(model).unwrap();
    let sup = Supervisor::solve(&member, SupervisionKind::Qmdp, &SolverConfig::default()).unwrap();
    simulate(
        &member,
        &sup,
        &SimConfig {
            episodes,
            horizon: 20,
            seed: 3,
            record_beliefs: false,
        },
    )
    .unwrap()
}

#[test]
fn hidden_states_follow_the_dataset() {
    let model = corridor(4);
    let p = NetworkParams::init(NetConfig::new(2, 2), 1);
    let mut data = trajectories(&model, 5);
    let all = collect_hidden_states(&p, &data);
    assert_eq!(all.len(), data.num_steps());
    assert_eq!(all, collect_hidden_states(&p, &data));
    data.episodes.truncate(1);
    data.episodes[0].steps.truncate(3);
    assert_eq!(collect_hidden_states(&p, &data).len(), 3);
    data.episodes.clear();
    assert!(collect_hidden_states(&p, &data).is_empty());
}

#[test]
fn kmeans_beats_random_assignments() {
    let mut r = rng(21);
    let points: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let km = kmeans_fit(&points, 3, 4, 100).unwrap();
    for _ in 0..100 {
        let labels: Vec<usize> = (0..50).map(|_| r.random_range(0..3)).collect();
        let mut inertia = 0.0;
        for k in 0..3 {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == k)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mean: Vec<f64> = (0..3)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect();
            inertia += members.iter().map(|p| squared_distance(p, &mean)).sum::<f64>();
        }
        assert!(km.inertia <= inertia + 1e-12);
    }
    for w in km.trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    assert_eq!(km, kmeans_fit(&points, 3, 4, 100).unwrap());
}

#[test]
fn separable_points_and_single_clusters() {
    let pts = vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]];
    let km = kmeans_fit(&pts, 2, 0, 50).unwrap();
    let mut c: Vec<f64> = km.centroids.iter().map(|c| c[0]).collect();
    c.sort_by(f64::total_cmp);
    assert_eq!(c, vec![0.0, 10.0]);
    assert_eq!(km.inertia, 0.0);
    let km = kmeans_fit(&[vec![1.0, 2.0], vec![3.0, 6.0]], 1, 0, 50).unwrap();
    assert_eq!(km.centroids, vec![vec![2.0, 4.0]]);
}

/// Follows the controller from its initial node and checks every visited
/// node against forward passes from the matching centroid.
#[test]
fn controller_tables_match_forward_passes() {
    let model = corridor(5);
    let c = NetConfig {
        hidden: 3,
        head: 4,
        embed: 3,
        ..NetConfig::new(2, 2)
    };
    let p = NetworkParams::init(c, 5);
    let cfg = (2, 2, 3, 3, 4);
    let h1 = gru_step(&p.theta, cfg, &[0.0; 3], 0).0;
    let km = KMeans {
        centroids: vec![vec![0.0; 3], h1],
        inertia: 0.0,
        trace: Vec::new(),
    };
    let fsc = build_fsc(&p, &Clustering::KMeans(km.clone()), &model).unwrap();
    let mut centroid_of: HashMap<usize, usize> = HashMap::new();
    centroid_of.insert(fsc.initial_node(), nearest(&km.centroids, &[0.0; 3]).0);
    let mut stack = vec![fsc.initial_node()];
    while let Some(n) = stack.pop() {
        let c = centroid_of[&n];
        for z in 0..2 {
            let (h, probs) = gru_step(&p.theta, cfg, &km.centroids[c], z);
            for (a, b) in fsc.action_distribution(n, z).iter().zip(&probs) {
                assert!((a - b).abs() < 1e-12);
            }
            let m = fsc.next_node(n, z);
            let want = nearest(&km.centroids, &h).0;
            match centroid_of.insert(m, want) {
                Some(prev) => assert_eq!(prev, want),
                None => stack.push(m),
            }
        }
    }
    assert_eq!(centroid_of.len(), fsc.num_nodes());
}

#[test]
fn one_cluster_gives_a_memoryless_controller() {
    let model = corridor(4);
    let p = NetworkParams::init(NetConfig::new(2, 2), 2);
    let km = KMeans {
        centroids: vec![vec![0.1; 16]],
        inertia: 0.0,
        trace: Vec::new(),
    };
    let fsc = build_fsc(&p, &Clustering::KMeans(km), &model).unwrap();
    assert_eq!(fsc.num_nodes(), 1);
    assert!((0..2).all(|z| fsc.next_node(0, z) == 0));
}

#[test]
fn qbn_codes_are_ternary_and_deterministic() {
    let model = corridor(5);
    let p = NetworkParams::init(NetConfig::new(2, 2), 3);
    let data = trajectories(&model, 8);
    let points = collect_hidden_states(&p, &data);
    let cfg = QbnTrainConfig {
        epochs: 5,
        ..QbnTrainConfig::default()
    };
    let (q1, t1) = qbn_fit_posthoc(&points, &cfg).unwrap();
    let (q2, t2) = qbn_fit_posthoc(&points, &cfg).unwrap();
    assert_eq!(t1, t2);
    for h in &points {
        let code = q1.encode(h);
        assert_eq!(code.len(), 2);
        assert!(code.iter().all(|c| [-1, 0, 1].contains(c)));
        assert_eq!(code, q2.encode(h));
    }
    let fsc = build_fsc(&p, &qbn_clustering(q1, &points), &model).unwrap();
    assert!(fsc.num_nodes() <= 9);
    let two = QbnTrainConfig {
        levels: QuantLevels::Two,
        ..cfg
    };
    let (q, _) = qbn_fit_posthoc(&points, &two).unwrap();
    assert!(points.iter().all(|h| q.encode(h).iter().all(|c| *c == -1 || *c == 1)));
}

#[test]
fn embedded_bottleneck_extracts_from_codes() {
    let model = corridor(5);
    let c = NetConfig {
        bottleneck: Some(Bottleneck {
            code: 2,
            levels: QuantLevels::Three,
        }),
        ..NetConfig::new(2, 2)
    };
    let p = NetworkParams::init(c, 4);
    let data = trajectories(&model, 8);
    let clustering = embedded_clustering(&p, &data).unwrap();
    assert!(clustering.size() <= 9);
    let fsc = build_fsc(&p, &clustering, &model).unwrap();
    assert!(fsc.num_nodes() >= 1 && fsc.num_nodes() <= 10);
    let plain = NetworkParams::init(NetConfig::new(2, 2), 4);
    assert!(embedded_clustering(&plain, &data).is_err());
}
