//! The inner problem of robust dynamic programming over an interval
//! ambiguity set: optimize `Σ p_i v_i` over `{p : lo <= p <= hi, Σ p = 1}`.
//!
//! The greedy below is exact for box-simplex sets: every entry starts at its
//! lower bound and the remaining budget is handed out in order of value.

use crate::error::{Error, Result};
use crate::model::{Interval, PROB_TOL};

fn check(values: &[f64], intervals: &[Interval]) -> Result<()> {
    if values.len() != intervals.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values for {} intervals",
            values.len(),
            intervals.len()
        )));
    }
    let sum_lo: f64 = intervals.iter().map(|iv| iv.lo).sum();
    let sum_hi: f64 = intervals.iter().map(|iv| iv.hi).sum();
    if intervals.is_empty()
        || intervals.iter().any(|iv| iv.lo > iv.hi)
        || sum_lo > 1.0 + PROB_TOL
        || sum_hi < 1.0 - PROB_TOL
    {
        return Err(Error::InfeasibleRow { sum_lo, sum_hi });
    }
    Ok(())
}

/// Fills `p` with the greedy optimizer, visiting entries in `order`.
fn fill(intervals: &[Interval], order: &[usize], p: &mut [f64]) {
    let mut budget = 1.0;
    for (x, iv) in p.iter_mut().zip(intervals) {
        *x = iv.lo;
        budget -= iv.lo;
    }
    for &i in order {
        if budget <= 0.0 {
            break;
        }
        let add = intervals[i].width().min(budget);
        p[i] += add;
        budget -= add;
    }
}

fn objective(values: &[f64], p: &[f64]) -> f64 {
    values
        .iter()
        .zip(p)
        .filter(|(_, &x)| x != 0.0)
        .map(|(v, x)| v * x)
        .sum()
}

fn solve(values: &[f64], intervals: &[Interval], maximize: bool) -> Result<(f64, Vec<f64>)> {
    check(values, intervals)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable sort keeps ties in index order.
    if maximize {
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    } else {
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    }
    let mut p = vec![0.0; values.len()];
    fill(intervals, &order, &mut p);
    Ok((objective(values, &p), p))
}

/// Worst case for a cost: the distribution maximizing expected successor value.
pub fn inner_max(values: &[f64], intervals: &[Interval]) -> Result<(f64, Vec<f64>)> {
    solve(values, intervals, true)
}

/// Best case: the distribution minimizing expected successor value.
pub fn inner_min(values: &[f64], intervals: &[Interval]) -> Result<(f64, Vec<f64>)> {
    solve(values, intervals, false)
}

/// Allocation-free objective of the inner problem for a sparse row
/// `(successor, interval)` against a value table. `order` is scratch space.
/// Rows are assumed feasible.
pub(crate) fn sparse_objective(row: &[(usize, Interval)], v: &[f64], maximize: bool, order: &mut Vec<usize>) -> f64 {
    order.clear();
    order.extend(0..row.len());
    if maximize {
        order.sort_by(|&i, &j| v[row[j].0].total_cmp(&v[row[i].0]));
    } else {
        order.sort_by(|&i, &j| v[row[i].0].total_cmp(&v[row[j].0]));
    }
    let mut budget = 1.0;
    let mut total = 0.0;
    for &(t, iv) in row {
        budget -= iv.lo;
        if iv.lo != 0.0 {
            total += iv.lo * v[t];
        }
    }
    for &i in order.iter() {
        if budget <= 0.0 {
            break;
        }
        let (t, iv) = row[i];
        let add = iv.width().min(budget);
        if add > 0.0 {
            total += add * v[t];
        }
        budget -= add;
    }
    total
}
