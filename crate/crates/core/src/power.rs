//! Power consumption model.
//!
//! Per BS the total draw is `(1/eta) sum ||w_k||^2 + P_CP,b + P_RD * delta(r_b)`
//! with `delta(y) = y^m` and `y` the BS sum rate in Gbit/s. Rates elsewhere in
//! the crate are in nats/s; [`GBIT_PER_NAT`] converts.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gbit/s per nat/s.
pub const GBIT_PER_NAT: f64 = std::f64::consts::LOG2_E / 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModelParams {
    /// Power amplifier efficiency, in (0, 1].
    pub eta: f64,
    pub p_fix: f64,
    /// Per RF chain.
    pub p_bs: f64,
    pub p_syn: f64,
    /// Per served user.
    pub p_ue: f64,
    pub p_ce: f64,
    /// Computational efficiency, flops per Joule.
    pub l_bs: f64,
    /// W / (Gbit/s)^m.
    pub p_rd: f64,
    pub m: f64,
    /// Iterations charged for beamformer computation.
    pub q: usize,
    /// Coefficient of the linear-in-users term of the per-iteration flop count.
    pub c_lin: f64,
}

impl Default for PowerModelParams {
    fn default() -> Self {
        PowerModelParams {
            eta: 0.2,
            p_fix: 3.0,
            p_bs: 0.4,
            p_syn: 1.0,
            p_ue: 0.1,
            p_ce: 0.05,
            l_bs: 12.8e9,
            p_rd: 2.4,
            m: 1.2,
            q: 20,
            c_lin: 0.0,
        }
    }
}

impl PowerModelParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            bad.push(format!("eta={} outside (0, 1]", self.eta));
        }
        if !(self.m >= 1.0) {
            bad.push(format!("m={} must be >= 1", self.m));
        }
        for (name, v) in [
            ("p_fix", self.p_fix),
            ("p_bs", self.p_bs),
            ("p_syn", self.p_syn),
            ("p_ue", self.p_ue),
            ("p_ce", self.p_ce),
            ("p_rd", self.p_rd),
            ("c_lin", self.c_lin),
        ] {
            if !(v >= 0.0) {
                bad.push(format!("{name}={v} must be nonnegative"));
            }
        }
        if !(self.l_bs > 0.0) {
            bad.push("l_bs must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// `P_RD * delta(rate)` for a rate in Gbit/s.
    pub fn rate_power(&self, rate_gbps: f64) -> f64 {
        self.p_rd * delta_unchecked(rate_gbps, self.m)
    }
}

/// `delta(y) = y^m` for a rate `y >= 0` in Gbit/s.
pub fn delta(rate_gbps: f64, m: f64) -> Result<f64> {
    if rate_gbps < 0.0 || rate_gbps.is_nan() {
        return Err(Error::Domain(format!("rate must be nonnegative, got {rate_gbps}")));
    }
    Ok(delta_unchecked(rate_gbps, m))
}

#[inline]
pub(crate) fn delta_unchecked(rate_gbps: f64, m: f64) -> f64 {
    if rate_gbps <= 0.0 {
        0.0
    } else {
        rate_gbps.powf(m)
    }
}

/// `delta'(y) = m y^(m-1)`.
#[inline]
pub fn delta_prime(rate_gbps: f64, m: f64) -> f64 {
    if m == 1.0 {
        1.0
    } else if rate_gbps <= 0.0 {
        0.0
    } else {
        m * rate_gbps.powf(m - 1.0)
    }
}

/// Rate-independent circuit power of one BS, term by term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitPower {
    pub fixed: f64,
    pub transceiver: f64,
    pub estimation: f64,
    pub linear_processing: f64,
}

impl CircuitPower {
    pub fn total(&self) -> f64 {
        self.fixed + self.transceiver + self.estimation + self.linear_processing
    }
}

/// `P_FIX + P_TC,b + P_CE + P_LP,b` with
/// `P_TC,b = N_b P_BS + P_SYN + K_b P_UE` and
/// `P_LP,b = W * data_fraction * 2 N_b K_b / L_BS + computation`.
pub fn circuit_power(
    antennas: usize,
    users: usize,
    params: &PowerModelParams,
    bandwidth: f64,
    data_fraction: f64,
    computation: f64,
) -> CircuitPower {
    let n = antennas as f64;
    let k = users as f64;
    CircuitPower {
        fixed: params.p_fix,
        transceiver: n * params.p_bs + params.p_syn + k * params.p_ue,
        estimation: params.p_ce,
        linear_processing: bandwidth * data_fraction * 2.0 * n * k / params.l_bs + computation,
    }
}

/// Power of one beamformer-update iteration at one BS:
/// `(W/U) (N^3 / (3 L_BS) + (3 K N^2 + 2 N^2 K_b + c_lin K) / L_BS)`.
/// `coupled_users` is the number of users whose channels enter the update
/// (all users for coordinated schemes, own-cell users otherwise).
pub fn iteration_power(
    antennas: usize,
    coupled_users: usize,
    cell_users: usize,
    params: &PowerModelParams,
    bandwidth: f64,
    coherence_uses: usize,
) -> f64 {
    let n = antennas as f64;
    let k = coupled_users as f64;
    let kb = cell_users as f64;
    let blocks_per_second = bandwidth / coherence_uses as f64;
    blocks_per_second
        * (n.powi(3) / (3.0 * params.l_bs)
            + (3.0 * k * n * n + 2.0 * n * n * kb + params.c_lin * k) / params.l_bs)
}

/// Per-BS and network totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    /// `(1/eta) sum ||w_k||^2` per BS.
    pub transmit: Vec<f64>,
    pub circuit: Vec<f64>,
    /// `P_RD delta(r_b)` per BS.
    pub rate_dependent: Vec<f64>,
    pub per_bs: Vec<f64>,
    pub total: f64,
}

impl PowerBreakdown {
    /// `g_b`, the part of BS `b`'s draw that does not depend on the rate.
    pub fn rate_independent(&self, b: usize) -> f64 {
        self.transmit[b] + self.circuit[b]
    }

    /// `g(w)` summed over the network.
    pub fn network_rate_independent(&self) -> f64 {
        self.transmit.iter().sum::<f64>() + self.circuit.iter().sum::<f64>()
    }
}

/// Total power given per-BS radiated power (sum of `||w_k||^2`), per-BS
/// rates in nats/s and per-BS circuit power.
pub fn total_power(
    radiated: &[f64],
    rates_nats: &[f64],
    circuit: &[f64],
    params: &PowerModelParams,
) -> Result<PowerBreakdown> {
    if radiated.len() != rates_nats.len() || radiated.len() != circuit.len() {
        return Err(Error::Shape(format!(
            "per-BS inputs of lengths {}, {}, {}",
            radiated.len(),
            rates_nats.len(),
            circuit.len()
        )));
    }
    let mut transmit = Vec::with_capacity(radiated.len());
    let mut rate_dependent = Vec::with_capacity(radiated.len());
    let mut per_bs = Vec::with_capacity(radiated.len());
    for b in 0..radiated.len() {
        let tx = radiated[b] / params.eta;
        let rd = params.p_rd * delta(rates_nats[b] * GBIT_PER_NAT, params.m)?;
        transmit.push(tx);
        rate_dependent.push(rd);
        per_bs.push(tx + circuit[b] + rd);
    }
    let total = per_bs.iter().sum();
    Ok(PowerBreakdown { transmit, circuit: circuit.to_vec(), rate_dependent, per_bs, total })
}
