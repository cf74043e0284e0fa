//! Brute-force power sweep for single-cell single-user instances.

use serde::{Deserialize, Serialize};

use crate::network::Network;
use crate::power::GBIT_PER_NAT;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// bit/J.
    pub ee: f64,
    /// Transmit power `||w||^2` at the optimum, W.
    pub power: f64,
}

/// EE in bit/J of a single-user network at transmit power `p` along MRT.
pub fn single_user_ee(net: &Network, p: f64) -> Result<f64> {
    check_single(net)?;
    let gain = net.channels.h[0][0].norm_squared();
    let rate = net.alpha[0] * (p * gain / net.noise[0]).ln_1p();
    let total = p / net.power.eta + net.circuit[0] + net.power.rate_power(rate * GBIT_PER_NAT);
    Ok(rate * std::f64::consts::LOG2_E / total)
}

/// Sweeps `grid` evenly spaced powers over `[0, P_b]` with `w = sqrt(p) h / ||h||`
/// and returns the best EE.
pub fn oracle_1d_power(net: &Network, grid: usize) -> Result<OracleResult> {
    check_single(net)?;
    if grid < 2 {
        return Err(Error::Domain("oracle grid needs at least two points".into()));
    }
    let budget = net.budgets[0];
    let mut best = OracleResult { ee: f64::NEG_INFINITY, power: 0.0 };
    for i in 0..grid {
        let p = budget * i as f64 / (grid - 1) as f64;
        let ee = single_user_ee(net, p)?;
        if ee > best.ee {
            best = OracleResult { ee, power: p };
        }
    }
    Ok(best)
}

fn check_single(net: &Network) -> Result<()> {
    if net.num_bs() != 1 || net.num_users() != 1 {
        return Err(Error::Shape(format!(
            "oracle needs one BS and one user, got {} and {}",
            net.num_bs(),
            net.num_users()
        )));
    }
    Ok(())
}
