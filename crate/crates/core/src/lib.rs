//! Robust finite-state controllers for POMDPs with interval transition
//! uncertainty.
//!
//! The crate alternates between training a recurrent policy on a concrete
//! member of the uncertainty set and extracting a finite-state controller
//! from it, and evaluating that controller exactly against the worst case
//! before picking the next, pessimistic, member to train on.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod error;
pub mod extract;
pub mod io;
pub mod model;
pub mod nn;
pub mod pip;
pub mod policy;
pub mod robust;
pub mod sim;
pub mod supervision;

pub use error::{Error, Result};
pub use model::{Belief, ConcretePomdp, Fsc, Interval, RobustPomdp};
