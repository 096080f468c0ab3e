//! Resolving interval rows to concrete distributions.
//!
//! Every resolution first picks a target per entry and then projects the
//! targets onto the box-constrained simplex with [`project_row`]: targets are
//! clamped into their boxes and the residual mass is spread proportionally to
//! the remaining slack in the direction that restores a unit sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::interval::Interval;
use super::pomdp::{ConcretePomdp, RobustPomdp};
use super::PROB_TOL;
use crate::error::{Error, Result};

/// Residual below which the projection stops.
pub const PROJECTION_TOL: f64 = 1e-12;

const MAX_PROJECTION_ROUNDS: usize = 64;

fn check_feasible(intervals: &[Interval]) -> Result<()> {
    let sum_lo: f64 = intervals.iter().map(|iv| iv.lo).sum();
    let sum_hi: f64 = intervals.iter().map(|iv| iv.hi).sum();
    let ordered = intervals.iter().all(|iv| iv.lo <= iv.hi);
    if intervals.is_empty() || !ordered || sum_lo > 1.0 + PROB_TOL || sum_hi < 1.0 - PROB_TOL {
        return Err(Error::InfeasibleRow { sum_lo, sum_hi });
    }
    Ok(())
}

/// Projects `targets` onto `{p : lo <= p <= hi, sum p = 1}`.
pub fn project_row(targets: &[f64], intervals: &[Interval]) -> Result<Vec<f64>> {
    if targets.len() != intervals.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} intervals",
            targets.len(),
            intervals.len()
        )));
    }
    check_feasible(intervals)?;
    let mut p: Vec<f64> = targets
        .iter()
        .zip(intervals)
        .map(|(&t, iv)| t.clamp(iv.lo, iv.hi))
        .collect();
    for _ in 0..MAX_PROJECTION_ROUNDS {
        let delta = 1.0 - p.iter().sum::<f64>();
        if delta.abs() < PROJECTION_TOL {
            break;
        }
        let slack: Vec<f64> = p
            .iter()
            .zip(intervals)
            .map(|(&x, iv)| if delta > 0.0 { iv.hi - x } else { x - iv.lo })
            .collect();
        let total: f64 = slack.iter().sum();
        if total <= 0.0 {
            break;
        }
        let scale = (delta.abs() / total).min(1.0) * delta.signum();
        for ((x, s), iv) in p.iter_mut().zip(&slack).zip(intervals) {
            *x = (*x + scale * s).clamp(iv.lo, iv.hi);
        }
    }
    Ok(p)
}

fn resolve(
    model: &RobustPomdp,
    mut targets: impl FnMut(usize, usize, &[Interval]) -> Vec<f64>,
) -> Result<ConcretePomdp> {
    model.try_map_rows(|s, a, row| {
        if row.is_empty() {
            return Ok(Vec::new());
        }
        let boxes: Vec<Interval> = row.iter().map(|(_, iv)| *iv).collect();
        project_row(&targets(s, a, &boxes), &boxes)
    })
}

/// The member obtained from interval midpoints.
pub fn nominal_midpoint(model: &RobustPomdp) -> Result<ConcretePomdp> {
    resolve(model, |_, _, boxes| boxes.iter().map(Interval::midpoint).collect())
}

/// Uniform entrywise sample inside each interval, then projected.
/// Deterministic given `seed`.
pub fn sample_member(model: &RobustPomdp, seed: u64) -> Result<ConcretePomdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    resolve(model, |_, _, boxes| {
        boxes
            .iter()
            .map(|iv| {
                if iv.is_point() {
                    iv.lo
                } else {
                    rng.random_range(iv.lo..=iv.hi)
                }
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

/// Starts every entry at its lower (or upper) bound, then projects.
pub fn bound_member(model: &RobustPomdp, which: Bound) -> Result<ConcretePomdp> {
    resolve(model, |_, _, boxes| {
        boxes
            .iter()
            .map(|iv| match which {
                Bound::Lower => iv.lo,
                Bound::Upper => iv.hi,
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxes(spec: &[(f64, f64)]) -> Vec<Interval> {
        spec.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect()
    }

    /// Minimum L1 distance to the feasible segment of a two-entry row,
    /// scanned on a 1e-3 grid.
    fn grid_min_l1(targets: [f64; 2], b: &[Interval]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=1000 {
            let p0 = i as f64 * 1e-3;
            let p1 = 1.0 - p0;
            if b[0].contains(p0, 1e-12) && b[1].contains(p1, 1e-12) {
                best = best.min((p0 - targets[0]).abs() + (p1 - targets[1]).abs());
            }
        }
        best
    }

    #[test]
    fn symmetric_targets_fill_equally() {
        let p = project_row(&[0.25; 3], &boxes(&[(0.1, 0.4); 3])).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn feasible_targets_are_unchanged() {
        let b = boxes(&[(0.1, 0.5), (0.2, 0.6), (0.1, 0.4)]);
        let t = [0.3, 0.45, 0.25];
        assert_eq!(project_row(&t, &b).unwrap(), t.to_vec());
    }

    #[test]
    fn overshooting_targets_land_on_the_l1_optimal_segment() {
        let b = boxes(&[(0.6, 0.8), (0.2, 0.4)]);
        let p = project_row(&[0.9, 0.9], &b).unwrap();
        // Clamped to (0.8, 0.4); the 0.2 excess is removed in proportion to
        // the downward slack (0.2, 0.2).
        assert!((p[0] - 0.7).abs() < 1e-12 && (p[1] - 0.3).abs() < 1e-12);
        let l1 = (p[0] - 0.9).abs() + (p[1] - 0.9).abs();
        assert!((l1 - grid_min_l1([0.9, 0.9], &b)).abs() < 1e-9);
    }

    #[test]
    fn infeasible_box_is_rejected() {
        let b = boxes(&[(0.6, 0.7), (0.6, 0.7)]);
        assert!(matches!(project_row(&[0.5, 0.5], &b), Err(Error::InfeasibleRow { .. })));
        let b = boxes(&[(0.1, 0.2), (0.1, 0.3)]);
        assert!(project_row(&[0.5, 0.5], &b).is_err());
    }

    #[test]
    fn lower_bound_fill_matches_grid_oracle() {
        let b = boxes(&[(0.6, 0.8), (0.2, 0.4)]);
        let p = project_row(&[0.6, 0.2], &b).unwrap();
        assert!((p[0] - 0.7).abs() < 1e-12 && (p[1] - 0.3).abs() < 1e-12);
        let l1 = (p[0] - 0.6).abs() + (p[1] - 0.2).abs();
        assert!((l1 - grid_min_l1([0.6, 0.2], &b)).abs() < 1e-9);
    }
}
