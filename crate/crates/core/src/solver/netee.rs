//! Network-EE variant of the update engine.
//!
//! The total power `p = sum_b z_b` couples every cell: `a_b = 1`, the
//! ratio linearization uses `p^(n)` for every BS and the power price
//! `c = sum_b (r_b^(n) / p^(n))^2` is shared. Each iteration the BSs exchange
//! `(r_b / p)^2` and `z_b`, counted in [`SolverState::exchanged`].

use super::{Engine, Objective, SolveOutcome, SolverConfig};
#[cfg(doc)]
use super::SolverState;
use crate::network::Network;
use crate::Result;

pub fn run_netee(net: &Network, config: &SolverConfig) -> Result<SolveOutcome> {
    Engine::new(net, Objective::Network, config.clone())?.run()
}
