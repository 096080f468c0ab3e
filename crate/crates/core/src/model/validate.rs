use serde::Serialize;

use super::interval::{Interval, Weight};
use super::pomdp::Pomdp;
use super::PROB_TOL;

/// Tolerance on the initial belief's normalization.
pub const BELIEF_SUM_TOL: f64 = 1e-12;

/// A single violated model invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Interval outside `0 < lo <= hi <= 1`.
    IntervalBounds {
        state: usize,
        action: usize,
        successor: usize,
        interval: Interval,
    },
    /// The box of a row does not intersect the probability simplex.
    InfeasibleRow {
        state: usize,
        action: usize,
        sum_lo: f64,
        sum_hi: f64,
    },
    /// A non-goal state-action pair without successors.
    EmptyRow {
        state: usize,
        action: usize,
    },
    /// A non-goal state that can never be left.
    NonGoalSink {
        state: usize,
    },
    GoalNotAbsorbing {
        state: usize,
    },
    NegativeCost {
        state: usize,
        action: usize,
        cost: f64,
    },
    InitialBeliefNegative {
        state: usize,
        probability: f64,
    },
    InitialBeliefSum {
        sum: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::IntervalBounds {
                state,
                action,
                successor,
                interval,
            } => write!(
                f,
                "transition {state} --{action}--> {successor} has interval {interval}; \
                 lower bounds must be strictly greater than zero and lo <= hi <= 1"
            ),
            Violation::InfeasibleRow {
                state,
                action,
                sum_lo,
                sum_hi,
            } => write!(
                f,
                "row ({state}, {action}) cannot sum to 1: sum of lower bounds {sum_lo}, \
                 sum of upper bounds {sum_hi}"
            ),
            Violation::EmptyRow { state, action } => {
                write!(f, "non-goal state {state} has no successors under action {action}")
            }
            Violation::NonGoalSink { state } => {
                write!(f, "state {state} is a sink but not a goal")
            }
            Violation::GoalNotAbsorbing { state } => {
                write!(f, "goal state {state} is not absorbing with zero cost")
            }
            Violation::NegativeCost { state, action, cost } => {
                write!(f, "cost of ({state}, {action}) is {cost}; costs must be nonnegative")
            }
            Violation::InitialBeliefNegative { state, probability } => {
                write!(f, "initial belief of state {state} is negative ({probability})")
            }
            Violation::InitialBeliefSum { sum } => {
                write!(f, "initial belief sums to {sum}, expected 1")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> crate::Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(crate::Error::Validation(self.violations))
        }
    }
}

pub(crate) fn validate<P: Weight>(model: &Pomdp<P>) -> ValidationReport {
    let mut violations = Vec::new();
    for s in 0..model.num_states() {
        if model.is_goal(s) {
            let absorbing = (0..model.num_actions()).all(|a| {
                let row = model.row(s, a);
                row.len() == 1 && row[0].0 == s && model.cost(s, a) == 0.0
            });
            if !absorbing {
                violations.push(Violation::GoalNotAbsorbing { state: s });
            }
            continue;
        }
        let mut trapped = true;
        for a in 0..model.num_actions() {
            let c = model.cost(s, a);
            if !(c >= 0.0 && c.is_finite()) {
                violations.push(Violation::NegativeCost {
                    state: s,
                    action: a,
                    cost: c,
                });
            }
            let row = model.row(s, a);
            if row.is_empty() {
                violations.push(Violation::EmptyRow { state: s, action: a });
                continue;
            }
            let (mut sum_lo, mut sum_hi) = (0.0, 0.0);
            for &(t, w) in row {
                let iv = w.as_interval();
                if !iv.is_well_formed() {
                    violations.push(Violation::IntervalBounds {
                        state: s,
                        action: a,
                        successor: t,
                        interval: iv,
                    });
                }
                sum_lo += iv.lo;
                sum_hi += iv.hi;
            }
            if sum_lo > 1.0 + PROB_TOL || sum_hi < 1.0 - PROB_TOL {
                violations.push(Violation::InfeasibleRow {
                    state: s,
                    action: a,
                    sum_lo,
                    sum_hi,
                });
            }
            if !(row.len() == 1 && row[0].0 == s) {
                trapped = false;
            }
        }
        if trapped {
            violations.push(Violation::NonGoalSink { state: s });
        }
    }
    let mut sum = 0.0;
    for (s, &p) in model.initial_belief().iter().enumerate() {
        if !(p >= 0.0) {
            violations.push(Violation::InitialBeliefNegative {
                state: s,
                probability: p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > BELIEF_SUM_TOL {
        violations.push(Violation::InitialBeliefSum { sum });
    }
    ValidationReport { violations }
}
