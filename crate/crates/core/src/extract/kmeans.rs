use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    /// Pairwise distinct centroids.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub trace: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the closest centroid, ties to the lowest index.
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

impl KMeans {
    pub fn assign(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, x).0
    }

    pub fn inertia_of(&self, points: &[Vec<f64>]) -> f64 {
        points.iter().map(|p| nearest(&self.centroids, p).1).sum()
    }
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        // Fewer distinct points than clusters.
        let Ok(dist) = WeightedIndex::new(&d2) else {
            break;
        };
        let c = points[dist.sample(rng)].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or `max_iters` is reached. Empty clusters are moved to the point
/// farthest from its centroid.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeans> {
    if k == 0 || points.is_empty() {
        return Err(Error::InvalidArgument(
            "k-means needs k >= 1 and at least one point".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dists = Vec::with_capacity(points.len());
        for (l, p) in labels.iter_mut().zip(points) {
            let (i, d) = nearest(&centroids, p);
            changed |= *l != i;
            *l = i;
            inertia += d;
            dists.push(d);
        }
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (j, c) in centroids.iter_mut().enumerate() {
            if counts[j] > 0 {
                for (ci, s) in c.iter_mut().zip(&sums[j]) {
                    *ci = s / counts[j] as f64;
                }
            } else {
                let far = (0..points.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("points are nonempty");
                *c = points[far].clone();
                dists[far] = 0.0;
            }
        }
    }
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for c in centroids {
        if !distinct.contains(&c) {
            distinct.push(c);
        }
    }
    let mut out = KMeans {
        centroids: distinct,
        inertia: 0.0,
        trace,
    };
    out.inertia = out.inertia_of(points);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_points() {
        let pts: Vec<Vec<f64>> = [0.0, 0.0, 10.0, 10.0].iter().map(|&x| vec![x]).collect();
        let km = kmeans_fit(&pts, 2, 1, 100).unwrap();
        let mut c: Vec<f64> = km.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 10.0]);
        assert_eq!(km.inertia, 0.0);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let km = kmeans_fit(&pts, 1, 0, 100).unwrap();
        assert!((km.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((km.centroids[0][1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicates_shrink_k() {
        let pts = vec![vec![1.0]; 5];
        let km = kmeans_fit(&pts, 3, 0, 10).unwrap();
        assert_eq!(km.centroids.len(), 1);
        assert_eq!(km.assign(&km.centroids[0]), 0);
    }
}
