//! A channel realization bundled with everything needed to evaluate or
//! optimize beamformers on it: per-user noise, per-BS budgets and circuit
//! power, effective bandwidth and the rate-dependent power constants.

use serde::{Deserialize, Serialize};

use crate::power::{circuit_power, iteration_power, PowerModelParams};
use crate::scenario::{ChannelSet, ScenarioConfig};
use crate::Result;

/// Which users' channels a BS touches when it computes beamformers; sets the
/// `|K|` term of the per-iteration complexity power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexityScope {
    /// Coordinated schemes: every user in the network.
    Network,
    /// Uncoordinated schemes: own-cell users only.
    Cell,
}

/// Computation charged in `P_LP,c = iterations * P_LP,iter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCharge {
    pub iterations: usize,
    pub scope: ComplexityScope,
}

impl ComplexityCharge {
    pub fn coordinated(iterations: usize) -> Self {
        ComplexityCharge { iterations, scope: ComplexityScope::Network }
    }

    pub fn per_cell(iterations: usize) -> Self {
        ComplexityCharge { iterations, scope: ComplexityScope::Cell }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub channels: ChannelSet,
    /// Noise (plus any interference treated as noise) per user, Watts.
    pub noise: Vec<f64>,
    /// Effective bandwidth in Hz per BS.
    pub alpha: Vec<f64>,
    /// Transmit power budget per BS, Watts.
    pub budgets: Vec<f64>,
    /// Rate-independent circuit power `P_CP,b` per BS, Watts.
    pub circuit: Vec<f64>,
    pub power: PowerModelParams,
    /// When set, users only hear their own BS (orthogonal sub-bands).
    pub isolated_cells: bool,
}

impl Network {
    /// Full-reuse network with the configured bandwidth and noise.
    pub fn new(
        channels: ChannelSet,
        scenario: &ScenarioConfig,
        power: &PowerModelParams,
        charge: ComplexityCharge,
    ) -> Result<Network> {
        Self::build(channels, scenario, power, charge, 1.0, false)
    }

    /// Orthogonal access: each BS gets `W/B` bandwidth with `N0/B` noise and
    /// no inter-cell interference.
    pub fn orthogonal(
        channels: ChannelSet,
        scenario: &ScenarioConfig,
        power: &PowerModelParams,
        charge: ComplexityCharge,
    ) -> Result<Network> {
        let split = channels.num_bs().max(1) as f64;
        Self::build(channels, scenario, power, charge, split, true)
    }

    fn build(
        channels: ChannelSet,
        scenario: &ScenarioConfig,
        power: &PowerModelParams,
        charge: ComplexityCharge,
        split: f64,
        isolated_cells: bool,
    ) -> Result<Network> {
        scenario.validate()?;
        power.validate()?;
        let bandwidth = scenario.bandwidth / split;
        let sizes = channels.cell_sizes();
        let total_users = channels.num_users();
        let circuit = (0..channels.num_bs())
            .map(|b| {
                let n_b = if total_users > 0 { channels.antennas(b) } else { scenario.antennas };
                let coupled = match charge.scope {
                    ComplexityScope::Network => total_users,
                    ComplexityScope::Cell => sizes[b],
                };
                let per_iter =
                    iteration_power(n_b, coupled, sizes[b], power, bandwidth, scenario.coherence_uses);
                circuit_power(
                    n_b,
                    sizes[b],
                    power,
                    bandwidth,
                    scenario.data_fraction(),
                    charge.iterations as f64 * per_iter,
                )
                .total()
            })
            .collect();
        Ok(Network {
            noise: vec![scenario.noise_power / split; total_users],
            alpha: vec![scenario.alpha() / split; channels.num_bs()],
            budgets: vec![scenario.max_tx_power; channels.num_bs()],
            circuit,
            power: power.clone(),
            isolated_cells,
            channels,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.channels.num_bs()
    }

    pub fn num_users(&self) -> usize {
        self.channels.num_users()
    }

    pub fn serving(&self, k: usize) -> usize {
        self.channels.serving[k]
    }

    /// Whether BS `b`'s transmissions reach user `k`.
    #[inline]
    pub fn couples(&self, b: usize, k: usize) -> bool {
        !self.isolated_cells || self.channels.serving[k] == b
    }

    /// Same network observed through different channels (e.g. contaminated
    /// estimates used for design).
    pub fn with_channels(&self, channels: ChannelSet) -> Network {
        Network { channels, ..self.clone() }
    }

    pub fn with_p_rd(&self, p_rd: f64) -> Network {
        let mut out = self.clone();
        out.power.p_rd = p_rd;
        out
    }

    /// Single-cell view of BS `b`: its own users with `extra_noise[k]` added to
    /// each user's noise. Returns the network and the global ids of its users.
    pub fn cell(&self, b: usize, extra_noise: &[f64]) -> (Network, Vec<usize>) {
        let users = self.channels.users_of(b);
        let channels = ChannelSet {
            h: vec![users.iter().map(|&k| self.channels.h[b][k].clone()).collect()],
            path_gain: vec![users.iter().map(|&k| self.channels.path_gain[b][k]).collect()],
            serving: vec![0; users.len()],
        };
        let noise = users.iter().map(|&k| self.noise[k] + extra_noise[k]).collect();
        let net = Network {
            channels,
            noise,
            alpha: vec![self.alpha[b]],
            budgets: vec![self.budgets[b]],
            circuit: vec![self.circuit[b]],
            power: self.power.clone(),
            isolated_cells: false,
        };
        (net, users)
    }
}
