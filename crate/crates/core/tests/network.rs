mod common;

use common::*;
use rand::Rng;
use robust_fsc::policy::{cross_entropy, gradient_check, loss, train_epochs, NetConfig, NetworkParams, TrainConfig};
use robust_fsc::sim::Episode;

fn config(observations: usize, actions: usize, hidden: usize, head: usize) -> NetConfig {
    NetConfig {
        observations,
        actions,
        embed: 3,
        hidden,
        head,
        bottleneck: None,
    }
}

#[test]
fn forward_matches_the_scalar_oracle() {
    let c = config(2, 2, 3, 4);
    for seed in 0..5 {
        let p = random_params(c, seed);
        let mut h = p.initial_hidden();
        let mut ho = h.clone();
        for z in [0, 1, 1, 0, 1] {
            let out = p.forward(&h, z);
            let (hn, probs) = gru_step(&p.theta, (2, 2, 3, 3, 4), &ho, z);
            for (a, b) in out.hidden.iter().zip(&hn).chain(out.probs.iter().zip(&probs)) {
                assert!((a - b).abs() < 1e-12);
            }
            h = out.hidden;
            ho = hn;
        }
    }
}

#[test]
fn loss_is_the_mean_over_steps() {
    let c = config(3, 2, 3, 4);
    let p = random_params(c, 7);
    let data = random_dataset(1, 3, 2, 3, 4);
    let mut total = 0.0;
    let mut steps = 0;
    for e in &data.episodes {
        let mut h = vec![0.0; 3];
        for s in &e.steps {
            let (hn, probs) = gru_step(&p.theta, (3, 2, 3, 3, 4), &h, s.observation);
            total -= s.target.iter().zip(&probs).map(|(m, q)| m * q.ln()).sum::<f64>();
            steps += 1;
            h = hn;
        }
    }
    assert!((loss(&p, &data) - total / steps as f64).abs() < 1e-12);
}

#[test]
fn cross_entropy_anchors() {
    let u = vec![0.25; 4];
    let logp = vec![0.25f64.ln(); 4];
    assert!((cross_entropy(&u, &logp) - 4f64.ln()).abs() < 1e-12);
    let sure = [(1.0 - 1e-9f64).ln(), 1e-9f64.ln()];
    assert!((cross_entropy(&[1.0, 0.0], &sure) - 1e-9).abs() < 1e-15);
}

#[test]
fn bptt_matches_finite_differences() {
    let c = config(3, 2, 4, 5);
    for seed in 0..3 {
        let p = random_params(c, seed);
        let data = random_dataset(seed + 10, 3, 2, 2, 5);
        let err = gradient_check(&p, &data);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn unused_observations_get_no_gradient() {
    let c = config(3, 2, 4, 5);
    let p = random_params(c, 2);
    let data = random_dataset(3, 2, 2, 2, 5);
    let refs: Vec<&Episode> = data.episodes.iter().collect();
    let (_, grad) = p.loss_and_gradient(&refs);
    assert!(grad[2 * 3..3 * 3].iter().all(|&g| g == 0.0));
    let (l, g) = p.loss_and_gradient(&[]);
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|&x| x == 0.0));
}

#[test]
fn training_fits_a_constant_target() {
    let c = NetConfig::new(2, 3);
    let mut p = NetworkParams::init(c, 0);
    let data = dataset(vec![vec![
        (0, vec![0.0, 1.0, 0.0]),
        (1, vec![0.0, 1.0, 0.0]),
        (0, vec![0.0, 1.0, 0.0]),
    ]]);
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 1,
        lr: 0.01,
        ..TrainConfig::default()
    };
    let trace = train_epochs(&mut p, &data, &cfg).unwrap();
    assert_eq!(trace.len(), 50);
    for w in trace.windows(2) {
        assert!(w[1] <= w[0], "{trace:?}");
    }
    assert!(loss(&p, &data) < 0.01, "{}", loss(&p, &data));
}

#[test]
fn training_is_deterministic() {
    let c = config(3, 2, 4, 5);
    let data = random_dataset(4, 3, 2, 40, 6);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let run = || {
        let mut p = NetworkParams::init(c, 9);
        let trace = train_epochs(&mut p, &data, &cfg).unwrap();
        (trace, p.theta)
    };
    assert_eq!(run(), run());
}

#[test]
fn hidden_state_stays_bounded() {
    let c = config(3, 2, 6, 4);
    let mut r = rng(12);
    for seed in 0..5 {
        let p = random_params(c, seed);
        let mut h: Vec<f64> = (0..6).map(|_| r.random_range(-3.0..3.0)).collect();
        for _ in 0..30 {
            let out = p.forward(&h, r.random_range(0..3));
            let before = h.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let after = out.hidden.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(after <= before + 1e-12);
            assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            h = out.hidden;
        }
    }
}
