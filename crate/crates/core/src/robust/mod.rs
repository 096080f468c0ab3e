//! Exact robust evaluation of a finite-state controller on the product
//! robust Markov chain.

mod chain;
mod evaluation;
mod inner;

pub use chain::{build_chain, build_chain_with, Materialize, RobustChain};
pub use evaluation::{
    bellman_sweep, evaluate_chain_exact, evaluate_member, infinite_states, robust_value_iteration, Mode, RobustValues,
    ViConfig, DIVERGENCE_CAP,
};
pub use inner::{inner_max, inner_min};

use crate::error::Result;
use crate::model::{Fsc, RobustPomdp};

/// Builds the product chain and runs robust value iteration on it.
pub fn evaluate_fsc(model: &RobustPomdp, fsc: &Fsc, mode: Mode, config: &ViConfig) -> Result<RobustValues> {
    evaluate_fsc_with(model, fsc, mode, config, Materialize::Reachable)
}

pub fn evaluate_fsc_with(
    model: &RobustPomdp,
    fsc: &Fsc,
    mode: Mode,
    config: &ViConfig,
    which: Materialize,
) -> Result<RobustValues> {
    let chain = build_chain_with(model, fsc, which)?;
    robust_value_iteration(&chain, mode, config)
}
