//! Interval-uncertain POMDPs, their concrete members, beliefs and
//! finite-state controllers.

mod belief;
mod fsc;
mod interval;
mod pomdp;
mod projection;
mod validate;

pub use belief::{belief_update, Belief};
pub use fsc::Fsc;
pub use interval::{Interval, Weight};
pub use pomdp::{ConcretePomdp, Pomdp, PomdpBuilder, RobustPomdp, Row};
pub use projection::{bound_member, nominal_midpoint, project_row, sample_member, Bound, PROJECTION_TOL};
pub use validate::{ValidationReport, Violation, BELIEF_SUM_TOL};

/// Default tolerance for probability sums and membership checks.
pub const PROB_TOL: f64 = 1e-9;
