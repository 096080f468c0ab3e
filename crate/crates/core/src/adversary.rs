//! Selection of a single static worst-case member for a controller.
//!
//! The linear program over all transition variables decomposes per
//! state-action pair: each row maximizes `Σ_{s'} T(s, a, s') w(s, a, s')`
//! over its box-simplex, with coefficients
//! `w(s, a, s') = Σ_n δ(a | n, O(s)) V(s', η(n, O(s)))`. Each row is a
//! fractional knapsack and is solved exactly by the greedy inner solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bound_member, nominal_midpoint, project_row, Bound, ConcretePomdp, Fsc, Interval, RobustPomdp};
use crate::robust::{inner_max, RobustValues};

/// Which controller nodes enter the coefficient sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSum {
    /// Every node, unweighted. Needs values on the full product space.
    #[default]
    All,
    /// Only nodes `n` with `(s, n)` present in the evaluated chain.
    Reachable,
}

/// How rows never exercised by the controller are resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnvisitedRows {
    #[default]
    Midpoint,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub node_sum: NodeSum,
    pub unvisited: UnvisitedRows,
}

#[derive(Debug, Clone)]
pub struct AdversaryResult {
    pub worst_case: ConcretePomdp,
    pub proxy_objective: f64,
    /// `coefficients[s][a]` is aligned with the successors of row `(s, a)`;
    /// `None` for rows the controller never visits.
    pub coefficients: Vec<Vec<Option<Vec<f64>>>>,
}

impl AdversaryResult {
    /// The linear objective evaluated at an arbitrary member.
    pub fn proxy_at(&self, member: &ConcretePomdp) -> f64 {
        proxy_objective(&self.coefficients, member)
    }
}

pub fn proxy_objective(coefficients: &[Vec<Option<Vec<f64>>>], member: &ConcretePomdp) -> f64 {
    let mut total = 0.0;
    for (s, rows) in coefficients.iter().enumerate() {
        for (a, w) in rows.iter().enumerate() {
            if let Some(w) = w {
                total += member
                    .row(s, a)
                    .iter()
                    .zip(w)
                    .filter(|((_, p), _)| *p != 0.0)
                    .map(|((_, p), c)| p * c)
                    .sum::<f64>();
            }
        }
    }
    total
}

/// Coefficient table of the decomposed objective.
pub fn coefficient_table(
    model: &RobustPomdp,
    fsc: &Fsc,
    values: &RobustValues,
    node_sum: NodeSum,
) -> Result<Vec<Vec<Option<Vec<f64>>>>> {
    fsc.check_compatible(model)?;
    if values.num_nodes() != fsc.num_nodes() {
        return Err(Error::InvalidArgument(
            "robust values were computed for a different controller".into(),
        ));
    }
    let mut table = vec![vec![None; model.num_actions()]; model.num_states()];
    for s in 0..model.num_states() {
        if model.is_goal(s) {
            continue;
        }
        let z = model.observation(s);
        for n in 0..fsc.num_nodes() {
            if values.value_at(s, n).is_none() {
                match node_sum {
                    NodeSum::Reachable => continue,
                    NodeSum::All => {
                        return Err(Error::InvalidArgument(format!(
                            "no robust value for ({s}, {n}); evaluate on the full product space"
                        )))
                    }
                }
            }
            let next = fsc.next_node(n, z);
            for (a, &w) in fsc.action_distribution(n, z).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let row = model.row(s, a);
                let coeffs = table[s][a].get_or_insert_with(|| vec![0.0; row.len()]);
                for (c, &(t, _)) in coeffs.iter_mut().zip(row) {
                    let v = values
                        .value_at(t, next)
                        .ok_or_else(|| Error::InvalidArgument(format!("missing robust value for ({t}, {next})")))?;
                    *c += w * v;
                }
            }
        }
    }
    Ok(table)
}

/// The pessimistic member for `fsc` given its robust values.
pub fn select_worst_case(
    model: &RobustPomdp,
    fsc: &Fsc,
    values: &RobustValues,
    config: &AdversaryConfig,
) -> Result<AdversaryResult> {
    let coefficients = coefficient_table(model, fsc, values, config.node_sum)?;
    let fallback = match config.unvisited {
        UnvisitedRows::Midpoint => nominal_midpoint(model)?,
        UnvisitedRows::Lower => bound_member(model, Bound::Lower)?,
        UnvisitedRows::Upper => bound_member(model, Bound::Upper)?,
    };
    let mut proxy = 0.0;
    let worst_case = model.try_map_rows(|s, a, row| {
        if row.is_empty() {
            return Ok(Vec::new());
        }
        let boxes: Vec<Interval> = row.iter().map(|(_, iv)| *iv).collect();
        match &coefficients[s][a] {
            Some(w) => {
                let (obj, p) = inner_max(w, &boxes)?;
                proxy += obj;
                // Keeps rows exactly normalized after the greedy's budget
                // arithmetic.
                project_row(&p, &boxes)
            }
            None => Ok(fallback.row(s, a).iter().map(|(_, p)| *p).collect()),
        }
    })?;
    Ok(AdversaryResult {
        worst_case,
        proxy_objective: proxy,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PomdpBuilder;
    use crate::robust::{evaluate_fsc_with, Materialize, Mode, ViConfig};

    #[test]
    fn self_loop_adversary_takes_the_upper_loop() {
        let mut b = PomdpBuilder::<Interval>::new(2, 1, 1);
        b.observation(0, 0).unwrap().observation(1, 0).unwrap();
        b.transition(0, 0, 0, Interval::new(0.4, 0.6)).unwrap();
        b.transition(0, 0, 1, Interval::new(0.4, 0.6)).unwrap();
        b.cost(0, 0, 1.0).unwrap().goal(1).unwrap().initial(0, 1.0).unwrap();
        let m = b.build().unwrap();
        let fsc = Fsc::memoryless(vec![vec![1.0]]).unwrap();
        let cfg = ViConfig {
            tol: 1e-13,
            ..ViConfig::default()
        };
        let v = evaluate_fsc_with(&m, &fsc, Mode::Pessimistic, &cfg, Materialize::All).unwrap();
        let r = select_worst_case(&m, &fsc, &v, &AdversaryConfig::default()).unwrap();
        let row = r.worst_case.row(0, 0);
        assert!((row[0].1 - 0.6).abs() < 1e-12 && (row[1].1 - 0.4).abs() < 1e-12);
        assert!((r.proxy_objective - 0.6 * 2.5).abs() < 1e-9);
        assert!(r.worst_case.is_member_of(&m, 1e-9));
    }

    #[test]
    fn all_nodes_needs_full_values() {
        let mut b = PomdpBuilder::<Interval>::new(2, 1, 1);
        b.observation(0, 0).unwrap().observation(1, 0).unwrap();
        b.transition(0, 0, 1, Interval::point(1.0)).unwrap();
        b.cost(0, 0, 1.0).unwrap().goal(1).unwrap().initial(0, 1.0).unwrap();
        let m = b.build().unwrap();
        let fsc = Fsc::new(0, vec![vec![vec![1.0]], vec![vec![1.0]]], vec![vec![0], vec![0]]).unwrap();
        let v = crate::robust::evaluate_fsc(&m, &fsc, Mode::Pessimistic, &ViConfig::default()).unwrap();
        assert!(select_worst_case(&m, &fsc, &v, &AdversaryConfig::default()).is_err());
        let reach = AdversaryConfig {
            node_sum: NodeSum::Reachable,
            ..AdversaryConfig::default()
        };
        assert!(select_worst_case(&m, &fsc, &v, &reach).is_ok());
    }
}
