//! Conventional comparison schemes: normalized MMSE precoding with EE power
//! allocation, uncoordinated full reuse, orthogonal access and the
//! rate-agnostic solvers.
//!
//! Every scheme returns a [`SchemeOutcome`]; the complexity charge of the
//! scheme is carried by the [`Network`] it runs on (see
//! [`crate::network::ComplexityCharge`]).

use serde::{Deserialize, Serialize};

use crate::linalg::{add_outer, hpd_solve, inner, CMatrix, CVector, C64};
use crate::metrics::BeamformerSet;
use crate::network::Network;
use crate::solver::{Engine, Objective, SolveOutcome, SolverConfig, TraceRow};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Round-robin passes over the cells for the per-cell schemes.
    pub rounds: usize,
    /// Iterations charged to MMSE precoding.
    pub mmse_q: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { rounds: 3, mmse_q: 1 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Validation(vec!["rounds must be >= 1".into()]));
        }
        Ok(())
    }
}

/// Which EE the power allocation for fixed directions maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerTarget {
    /// Network EE over all cells jointly.
    Network,
    /// Each cell its own EE, others' latest beamformers seen as noise.
    PerCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub beamformers: BeamformerSet,
    /// Optimization trace of the scheme's own target.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub ota: usize,
    pub backhaul: usize,
    pub exchanged: usize,
    pub converged: bool,
}

impl From<SolveOutcome> for SchemeOutcome {
    fn from(out: SolveOutcome) -> Self {
        SchemeOutcome {
            beamformers: out.beamformers,
            iterations: out.state.iteration,
            ota: out.state.ota,
            backhaul: out.state.backhaul,
            exchanged: out.state.exchanged,
            converged: out.converged,
            trace: out.trace,
        }
    }
}

/// `(I + P_b / (K_b N0) sum_j h_{b,j} h_{b,j}^H)^{-1} h_{b,k}`, normalized.
/// Users with a zero channel get a zero direction.
pub fn mmse_directions(net: &Network) -> Vec<CVector> {
    let ch = &net.channels;
    let mut out: Vec<CVector> = (0..net.num_users()).map(|k| CVector::zeros(ch.own(k).len())).collect();
    for b in 0..net.num_bs() {
        let users = ch.users_of(b);
        if users.is_empty() {
            continue;
        }
        let n = ch.antennas(b);
        let per_user = net.budgets[b] / users.len() as f64;
        let mut a = CMatrix::identity(n, n);
        for j in 0..net.num_users() {
            if net.couples(b, j) {
                add_outer(&mut a, &ch.h[b][j], per_user / net.noise[j]);
            }
        }
        let rhs: Vec<CVector> = users.iter().map(|&k| ch.h[b][k].clone()).collect();
        let sol = hpd_solve(&a, &rhs).expect("identity plus PSD is positive definite");
        for (&k, v) in users.iter().zip(sol) {
            let norm = v.norm();
            if norm > 0.0 {
                out[k] = v / C64::new(norm, 0.0);
            }
        }
    }
    out
}

/// EE-optimal powers along fixed unit directions, `w_k = sqrt(p_k) v_k`.
pub fn ee_power_allocation(
    net: &Network,
    directions: &[CVector],
    target: PowerTarget,
    baseline: &BaselineConfig,
    config: &SolverConfig,
) -> Result<SchemeOutcome> {
    match target {
        PowerTarget::Network => Ok(Engine::new(net, Objective::Network, config.clone())?
            .with_directions(directions.to_vec())?
            .run()?
            .into()),
        PowerTarget::PerCell => per_cell_rounds(net, Some(directions), baseline.rounds, config),
    }
}

/// Every BS maximizes its own EE over the full band, seeing the other cells'
/// latest beamformers as noise; no backhaul signaling.
pub fn run_uncoordinated(net: &Network, baseline: &BaselineConfig, config: &SolverConfig) -> Result<SchemeOutcome> {
    per_cell_rounds(net, None, baseline.rounds, config)
}

/// One sub-band per BS; `net` must come from [`Network::orthogonal`].
pub fn run_orthogonal(net: &Network, config: &SolverConfig) -> Result<SchemeOutcome> {
    if !net.isolated_cells {
        return Err(Error::InvalidConfig("orthogonal access needs a network with isolated cells".into()));
    }
    per_cell_rounds(net, None, 1, config)
}

/// Optimizes with `P_RD = 0`; the caller evaluates on `net` itself, so the
/// reported objective includes the rate-dependent power.
pub fn run_rate_agnostic(net: &Network, objective: Objective, config: &SolverConfig) -> Result<SchemeOutcome> {
    let blind = net.with_p_rd(0.0);
    Ok(Engine::new(&blind, objective, config.clone())?.run()?.into())
}

fn equal_power_start(net: &Network, directions: Option<&[CVector]>) -> Vec<CVector> {
    let ch = &net.channels;
    let sizes = ch.cell_sizes();
    (0..net.num_users())
        .map(|k| {
            let b = net.serving(k);
            let v = match directions {
                Some(d) => d[k].clone(),
                None => {
                    let h = ch.own(k);
                    let n = h.norm();
                    if n > 0.0 {
                        h / C64::new(n, 0.0)
                    } else {
                        h.clone()
                    }
                }
            };
            v * C64::new((net.budgets[b] / sizes[b] as f64).sqrt(), 0.0)
        })
        .collect()
}

fn per_cell_rounds(
    net: &Network,
    directions: Option<&[CVector]>,
    rounds: usize,
    config: &SolverConfig,
) -> Result<SchemeOutcome> {
    let ch = &net.channels;
    let nk = net.num_users();
    let mut w = equal_power_start(net, directions);
    let mut trace = Vec::new();
    let (mut iterations, mut ota) = (0, 0);
    let mut converged = true;
    let eval = Engine::new(net, Objective::equal_weights(net.num_bs()), config.clone())?;
    for round in 0..rounds {
        for b in 0..net.num_bs() {
            let mut extra = vec![0.0; nk];
            if !net.isolated_cells {
                for k in ch.users_of(b) {
                    extra[k] = (0..nk)
                        .filter(|&j| net.serving(j) != b)
                        .map(|j| inner(&ch.h[net.serving(j)][k], &w[j]).norm_sqr())
                        .sum();
                }
            }
            let (cell, users) = net.cell(b, &extra);
            if users.is_empty() {
                continue;
            }
            let mut engine = Engine::new(&cell, Objective::WeightedSum(vec![1.0]), config.clone())?;
            if let Some(d) = directions {
                engine = engine.with_directions(users.iter().map(|&k| d[k].clone()).collect())?;
            }
            let out = engine.run()?;
            iterations += out.state.iteration;
            ota += out.state.ota;
            converged &= out.converged;
            for (i, &k) in users.iter().enumerate() {
                w[k] = out.beamformers.w[i].clone();
            }
        }
        let set = BeamformerSet::from_vectors(w.clone(), ch);
        trace.push(TraceRow {
            iteration: round + 1,
            objective: eval.objective_value(&set)?,
            ota,
            backhaul: 0,
            exchanged: 0,
            max_power_slack: set.max_power_slack(&net.budgets),
        });
    }
    Ok(SchemeOutcome {
        beamformers: BeamformerSet::from_vectors(w, ch),
        trace,
        iterations,
        ota,
        backhaul: 0,
        exchanged: 0,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate, received};
    use crate::network::ComplexityCharge;
    use crate::power::PowerModelParams;
    use crate::scenario::{build_layout, generate_drop, ChannelSet, ScenarioConfig};

    fn small(cells: usize, seed: u64) -> (ScenarioConfig, ChannelSet) {
        let scen = ScenarioConfig {
            cells,
            wrap_around: cells == 7,
            antennas: 3,
            users_per_cell: 2,
            ..Default::default()
        };
        let layout = build_layout(&scen).unwrap();
        let drop = generate_drop(&scen, &layout, seed).unwrap();
        (scen, drop.channels)
    }

    fn net(cells: usize, seed: u64) -> Network {
        let (scen, ch) = small(cells, seed);
        Network::new(ch, &scen, &PowerModelParams::default(), ComplexityCharge::coordinated(20)).unwrap()
    }

    #[test]
    fn mmse_directions_are_unit_norm() {
        let net = net(7, 1);
        for v in mmse_directions(&net) {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mmse_single_user_is_mrt() {
        let mut net = net(1, 2);
        net.channels.h[0].truncate(1);
        net.channels.path_gain[0].truncate(1);
        net.channels.serving.truncate(1);
        net.noise.truncate(1);
        let v = &mmse_directions(&net)[0];
        let h = &net.channels.h[0][0];
        assert!((inner(v, h).norm() - h.norm()).abs() < 1e-9 * h.norm());
    }

    #[test]
    fn mmse_low_snr_limit_is_mrt() {
        let mut net = net(7, 3);
        net.budgets.iter_mut().for_each(|p| *p = 1e-30);
        for (k, v) in mmse_directions(&net).iter().enumerate() {
            let h = net.channels.own(k);
            assert!((inner(v, h).norm() / h.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn power_allocation_keeps_directions() {
        let net = net(7, 4);
        let dirs = mmse_directions(&net);
        for target in [PowerTarget::Network, PowerTarget::PerCell] {
            let out = ee_power_allocation(&net, &dirs, target, &BaselineConfig::default(), &SolverConfig::default())
                .unwrap();
            assert!(out.beamformers.max_power_slack(&net.budgets) <= 1e-9);
            for (w, v) in out.beamformers.w.iter().zip(&dirs) {
                let n = w.norm();
                if n > 0.0 {
                    assert!((inner(v, w).norm() / n - 1.0).abs() < 1e-12);
                }
            }
            assert!(evaluate(&net, &out.beamformers).unwrap().network_ee > 0.0);
        }
    }

    #[test]
    fn uncoordinated_sees_interference_and_uses_no_backhaul() {
        let (scen, ch) = small(7, 5);
        let net = Network::new(ch, &scen, &PowerModelParams::default(), ComplexityCharge::per_cell(20)).unwrap();
        let out = run_uncoordinated(&net, &BaselineConfig::default(), &SolverConfig::default()).unwrap();
        assert_eq!(out.backhaul, 0);
        assert_eq!(out.trace.len(), 3);
        assert!(out.beamformers.max_power_slack(&net.budgets) <= 1e-9);
        let any_interference = (0..net.num_users())
            .any(|k| received(k, &net.channels, &out.beamformers).unwrap().interference > 0.0);
        assert!(any_interference);
    }

    #[test]
    fn uncoordinated_single_cell_matches_wsum() {
        let net = net(1, 6);
        let cfg = SolverConfig::default();
        let a = run_uncoordinated(&net, &BaselineConfig::default(), &cfg).unwrap();
        let b = Engine::new(&net, Objective::equal_weights(1), cfg).unwrap().run().unwrap();
        let ea = evaluate(&net, &a.beamformers).unwrap().network_ee;
        assert!((ea - b.objective).abs() <= 1e-6 * b.objective);
    }

    #[test]
    fn orthogonal_has_no_cross_cell_terms() {
        let (scen, ch) = small(7, 7);
        let net = Network::orthogonal(ch, &scen, &PowerModelParams::default(), ComplexityCharge::per_cell(20)).unwrap();
        assert!((net.alpha[0] - scen.alpha() / 7.0).abs() < 1e-6);
        let out = run_orthogonal(&net, &SolverConfig::default()).unwrap();
        for k in 0..net.num_users() {
            let rec = crate::metrics::received_at(k, &net.channels, &out.beamformers.w, true);
            let b = net.serving(k);
            let own_cell: f64 = net
                .channels
                .users_of(b)
                .into_iter()
                .filter(|&j| j != k)
                .map(|j| inner(&net.channels.h[b][k], &out.beamformers.w[j]).norm_sqr())
                .sum();
            assert_eq!(rec.interference, own_cell);
        }
    }

    #[test]
    fn orthogonal_rejects_full_reuse_network() {
        let net = net(7, 8);
        assert!(run_orthogonal(&net, &SolverConfig::default()).is_err());
    }

    #[test]
    fn rate_agnostic_equals_rate_aware_without_rate_power() {
        let net = net(7, 9).with_p_rd(0.0);
        let cfg = SolverConfig::default();
        let a = run_rate_agnostic(&net, Objective::Network, &cfg).unwrap();
        let b = Engine::new(&net, Objective::Network, cfg).unwrap().run().unwrap();
        assert_eq!(a.beamformers, b.beamformers);
    }
}
