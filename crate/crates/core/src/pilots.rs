//! Uplink pilot-resource grouping.
//!
//! With `tau` resources for `|K|` users, users are split into `X_min` groups
//! of `M_min` users and `X_max` groups of `M_max = ceil(|K| / tau)` users.
//! The small groups are filled first, then the large ones from whoever is left.

use std::cmp::Ordering;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::Network;
use crate::power::{delta_unchecked, GBIT_PER_NAT};
use crate::{Error, Result};

/// Default limit on candidate groups enumerated per phase.
pub const DEFAULT_CANDIDATE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub m_max: usize,
    pub m_min: usize,
    pub x_max: usize,
    pub x_min: usize,
}

/// `(M_max, M_min, X_max, X_min)` for `k_total` users on `tau` resources.
pub fn group_sizes(k_total: usize, tau: usize, max_cell_size: usize) -> Result<GroupSizes> {
    if tau == 0 || tau > k_total {
        return Err(Error::InvalidTau { tau, reason: format!("must lie in 1..={k_total}") });
    }
    if tau < max_cell_size {
        return Err(Error::InvalidTau {
            tau,
            reason: format!("below the largest cell size {max_cell_size}"),
        });
    }
    let m_max = k_total.div_ceil(tau);
    let x_max = k_total - (m_max - 1) * tau;
    Ok(GroupSizes { m_max, m_min: m_max - 1, x_max, x_min: tau - x_max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotAllocation {
    /// Users sharing each pilot resource, in allocation order.
    pub groups: Vec<Vec<usize>>,
    pub m_max: usize,
    pub m_min: usize,
    pub x_max: usize,
    pub x_min: usize,
}

impl PilotAllocation {
    /// One resource per user.
    pub fn orthogonal(num_users: usize) -> Self {
        PilotAllocation {
            groups: (0..num_users).map(|k| vec![k]).collect(),
            m_max: 1,
            m_min: 0,
            x_max: num_users,
            x_min: 0,
        }
    }

    /// Wraps explicit groups, deriving the size counts from them.
    pub fn from_groups(groups: Vec<Vec<usize>>) -> Self {
        let m_max = groups.iter().map(Vec::len).max().unwrap_or(0);
        let m_min = m_max.saturating_sub(1);
        let x_max = groups.iter().filter(|g| g.len() == m_max).count();
        let x_min = groups.len() - x_max;
        PilotAllocation { groups, m_max, m_min, x_max, x_min }
    }

    pub fn tau(&self) -> usize {
        self.groups.len()
    }

    /// Checks that the groups partition `0..num_users` with the declared sizes.
    pub fn validate(&self, num_users: usize) -> Result<()> {
        let mut seen = vec![false; num_users];
        let mut bad = Vec::new();
        for (g, members) in self.groups.iter().enumerate() {
            if members.len() != self.m_max && members.len() != self.m_min {
                bad.push(format!("group {g} has size {}", members.len()));
            }
            for &k in members {
                if k >= num_users || seen[k] {
                    bad.push(format!("user {k} is out of range or repeated"));
                } else {
                    seen[k] = true;
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::AllocationIncomplete(k));
        }
        let big = self.groups.iter().filter(|g| g.len() == self.m_max).count();
        if big != self.x_max || self.groups.len() - big != self.x_min {
            bad.push(format!("expected {} large and {} small groups", self.x_max, self.x_min));
        }
        if self.x_min * self.m_min + self.x_max * self.m_max != num_users {
            bad.push("group counts do not add up to the user count".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

/// Large-scale quantities the group metric needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotProblem {
    /// `zeta[b][k]`, linear.
    pub path_gain: Vec<Vec<f64>>,
    pub serving: Vec<usize>,
    /// Per-BS transmit budgets, Watts.
    pub budgets: Vec<f64>,
    /// Per-user noise, Watts.
    pub noise: Vec<f64>,
    /// Effective bandwidth, Hz.
    pub alpha: f64,
    pub eta: f64,
    /// `sum_b P_CP,b`, Watts.
    pub circuit_total: f64,
    pub p_rd: f64,
    pub m: f64,
}

impl PilotProblem {
    pub fn from_network(net: &Network) -> Self {
        PilotProblem {
            path_gain: net.channels.path_gain.clone(),
            serving: net.channels.serving.clone(),
            budgets: net.budgets.clone(),
            noise: net.noise.clone(),
            alpha: net.alpha.first().copied().unwrap_or(0.0),
            eta: net.power.eta,
            circuit_total: net.circuit.iter().sum(),
            p_rd: net.power.p_rd,
            m: net.power.m,
        }
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    fn cell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.budgets.len()];
        for &b in &self.serving {
            sizes[b] += 1;
        }
        sizes
    }

    /// Equal-share transmit power `P_b / K_b` of the BS serving `k`.
    fn share(&self, k: usize, sizes: &[usize]) -> f64 {
        let b = self.serving[k];
        self.budgets[b] / sizes[b] as f64
    }

    /// Rate estimate of each member of `group` in Gbit/s.
    pub fn group_rates(&self, group: &[usize]) -> Vec<f64> {
        let sizes = self.cell_sizes();
        group
            .iter()
            .map(|&k| {
                let desired = self.share(k, &sizes) * self.path_gain[self.serving[k]][k];
                let interference: f64 = group
                    .iter()
                    .filter(|&&j| j != k)
                    .map(|&j| self.share(j, &sizes) * self.path_gain[self.serving[j]][k])
                    .sum();
                self.alpha * (desired / (interference + self.noise[k])).ln_1p() * GBIT_PER_NAT
            })
            .collect()
    }

    /// Group energy-efficiency metric `kappa`.
    pub fn group_metric(&self, group: &[usize]) -> Result<f64> {
        if group.is_empty() {
            return Err(Error::Domain("empty pilot group".into()));
        }
        let sizes = self.cell_sizes();
        let rates = self.group_rates(group);
        let transmit: f64 = group.iter().map(|&k| self.share(k, &sizes)).sum::<f64>() / self.eta;
        let circuit = group.len() as f64 * self.circuit_total / self.num_users() as f64;
        let rate_power: f64 = rates.iter().map(|&r| delta_unchecked(r, self.m)).sum::<f64>() * self.p_rd;
        Ok(rates.iter().sum::<f64>() / (transmit + circuit + rate_power))
    }

    /// Sum of own-cell path gains, the greedy baseline's metric.
    pub fn sum_path_gain(&self, group: &[usize]) -> f64 {
        group.iter().map(|&k| self.path_gain[self.serving[k]][k]).sum()
    }

    fn sizes_for(&self, tau: usize) -> Result<GroupSizes> {
        let max_cell = self.cell_sizes().into_iter().max().unwrap_or(0);
        group_sizes(self.num_users(), tau, max_cell)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Scores every `size`-subset of `pool` and picks up to `count` disjoint groups,
/// best score first, ties broken by the sorted member lists.
fn select<F>(pool: &[usize], size: usize, count: usize, cap: u128, score: &F) -> Result<Vec<Vec<usize>>>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if count == 0 || size == 0 {
        return Ok(Vec::new());
    }
    let candidates = binomial(pool.len(), size);
    if candidates > cap {
        return Err(Error::TooManyCandidates { candidates, cap });
    }
    let groups: Vec<Vec<usize>> = pool.iter().copied().combinations(size).collect();
    let mut scored: Vec<(f64, Vec<usize>)> = groups.into_par_iter().map(|g| (score(&g), g)).collect();
    scored.sort_by(|a, b| match b.0.partial_cmp(&a.0) {
        Some(Ordering::Equal) | None => a.1.cmp(&b.1),
        Some(o) => o,
    });
    let mut used = vec![false; pool.iter().max().map_or(0, |&m| m + 1)];
    let mut out = Vec::with_capacity(count);
    for (_, g) in scored {
        if g.iter().any(|&k| used[k]) {
            continue;
        }
        for &k in &g {
            used[k] = true;
        }
        out.push(g);
        if out.len() == count {
            break;
        }
    }
    Ok(out)
}

fn two_phase<F>(problem: &PilotProblem, tau: usize, cap: u128, score: F) -> Result<PilotAllocation>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let sizes = problem.sizes_for(tau)?;
    let all: Vec<usize> = (0..problem.num_users()).collect();
    let first_pool_cost = binomial(all.len(), sizes.m_min);
    if sizes.x_min > 0 && first_pool_cost > cap {
        return Err(Error::TooManyCandidates { candidates: first_pool_cost, cap });
    }
    let mut groups = select(&all, sizes.m_min, sizes.x_min, cap, &score)?;
    let placed: Vec<bool> = {
        let mut p = vec![false; all.len()];
        groups.iter().flatten().for_each(|&k| p[k] = true);
        p
    };
    let rest: Vec<usize> = all.into_iter().filter(|&k| !placed[k]).collect();
    groups.extend(select(&rest, sizes.m_max, sizes.x_max, cap, &score)?);
    let alloc = PilotAllocation {
        groups,
        m_max: sizes.m_max,
        m_min: sizes.m_min,
        x_max: sizes.x_max,
        x_min: sizes.x_min,
    };
    alloc.validate(problem.num_users())?;
    Ok(alloc)
}

/// Energy-efficiency-driven grouping: groups with the largest `kappa` first.
pub fn allocate(problem: &PilotProblem, tau: usize, cap: u128) -> Result<PilotAllocation> {
    two_phase(problem, tau, cap, |g| problem.group_metric(g).unwrap_or(f64::NEG_INFINITY))
}

/// Greedy grouping by largest sum of own-cell path gains.
pub fn allocate_greedy(problem: &PilotProblem, tau: usize, cap: u128) -> Result<PilotAllocation> {
    two_phase(problem, tau, cap, |g| problem.sum_path_gain(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn problem(path_gain: Vec<Vec<f64>>, serving: Vec<usize>) -> PilotProblem {
        let b = path_gain.len();
        let k = serving.len();
        PilotProblem {
            path_gain,
            serving,
            budgets: vec![0.5; b],
            noise: vec![1e-13; k],
            alpha: 14.4e6,
            eta: 0.2,
            circuit_total: 6.0 * b as f64,
            p_rd: 2.4,
            m: 1.2,
        }
    }

    fn random_problem(seed: u64, cells: usize, per_cell: usize) -> PilotProblem {
        use rand::Rng;
        let mut rng = crate::scenario::drop_rng(seed, 0);
        let k = cells * per_cell;
        let gains = (0..cells)
            .map(|_| (0..k).map(|_| 10f64.powf(-rng.random_range(8.0..12.0))).collect())
            .collect();
        problem(gains, (0..k).map(|u| u / per_cell).collect())
    }

    #[test]
    fn group_size_examples() {
        let s = group_sizes(21, 12, 3).unwrap();
        assert_eq!((s.m_max, s.m_min, s.x_max, s.x_min), (2, 1, 9, 3));
        let s = group_sizes(21, 15, 3).unwrap();
        assert_eq!((s.m_max, s.x_max, s.x_min), (2, 6, 9));
        let s = group_sizes(21, 21, 3).unwrap();
        assert_eq!((s.m_max, s.x_max, s.x_min), (1, 21, 0));
        assert!(matches!(group_sizes(21, 22, 3), Err(Error::InvalidTau { .. })));
        assert!(matches!(group_sizes(21, 2, 3), Err(Error::InvalidTau { .. })));
    }

    #[test]
    fn metric_examples() {
        let p = problem(vec![vec![1e-9, 2e-10], vec![3e-10, 1e-9]], vec![0, 1]);
        let single = p.group_rates(&[0])[0];
        let expect = 14.4e6 * (0.5 * 1e-9 / 1e-13f64).ln_1p() * GBIT_PER_NAT;
        assert!((single - expect).abs() < 1e-15);

        let zero = problem(vec![vec![0.0, 1e-9]], vec![0, 0]);
        assert_eq!(zero.group_rates(&[0, 1])[0], 0.0);
        assert!(p.group_metric(&[]).is_err());

        // symmetric pair computed by hand
        let s = problem(vec![vec![1e-9, 1e-11], vec![1e-11, 1e-9]], vec![0, 1]);
        let sinr = 0.5e-9 / (0.5e-11 + 1e-13);
        let r = 14.4e6 * f64::ln_1p(sinr) * std::f64::consts::LOG2_E / 1e9;
        let kappa = 2.0 * r / (2.0 * 0.5 / 0.2 + 2.0 * 12.0 / 2.0 + 2.4 * 2.0 * r.powf(1.2));
        assert!((s.group_metric(&[0, 1]).unwrap() - kappa).abs() <= 1e-10 * kappa);
    }

    #[test]
    fn orthogonal_when_tau_equals_users() {
        let p = random_problem(3, 7, 3);
        let a = allocate(&p, 21, DEFAULT_CANDIDATE_CAP).unwrap();
        let g = allocate_greedy(&p, 21, DEFAULT_CANDIDATE_CAP).unwrap();
        for alloc in [a, g] {
            assert_eq!(alloc.groups.len(), 21);
            assert!(alloc.groups.iter().all(|grp| grp.len() == 1));
        }
    }

    #[test]
    fn small_instance_matches_exhaustive_rule() {
        for seed in 0..20 {
            let p = random_problem(seed, 2, 2);
            let a = allocate(&p, 3, DEFAULT_CANDIDATE_CAP).unwrap();
            // the two singletons must be the two best-scoring single users
            let mut singles: Vec<(f64, usize)> =
                (0..4).map(|k| (p.group_metric(&[k]).unwrap(), k)).collect();
            singles.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
            let chosen: Vec<usize> = a.groups.iter().filter(|g| g.len() == 1).map(|g| g[0]).collect();
            assert_eq!(chosen, vec![singles[0].1, singles[1].1]);
            let pair: Vec<usize> = (0..4).filter(|k| !chosen.contains(k)).collect();
            assert_eq!(a.groups.last().unwrap(), &pair);
        }
    }

    #[test]
    fn greedy_singletons_have_largest_gains() {
        let p = random_problem(11, 7, 3);
        let g = allocate_greedy(&p, 12, DEFAULT_CANDIDATE_CAP).unwrap();
        let mut own: Vec<(f64, usize)> = (0..21).map(|k| (p.path_gain[p.serving[k]][k], k)).collect();
        own.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        let mut top: Vec<usize> = own[..3].iter().map(|x| x.1).collect();
        top.sort();
        let mut chosen: Vec<usize> = g.groups.iter().filter(|x| x.len() == 1).map(|x| x[0]).collect();
        chosen.sort();
        assert_eq!(chosen, top);
    }

    #[test]
    fn allocators_differ_when_strong_users_interfere() {
        // users 2 and 3 are strong but hear each other's BS as loudly as their own;
        // users 4 and 5 are weak and isolated
        let own = [1e-7, 1e-7, 1e-8, 1e-8, 1e-10, 1e-10];
        let mut g = vec![vec![1e-14; 6]; 6];
        for k in 0..6 {
            g[k][k] = own[k];
        }
        g[3][2] = 1e-8;
        g[2][3] = 1e-8;
        let p = problem(g, (0..6).collect());
        let ee = allocate(&p, 4, DEFAULT_CANDIDATE_CAP).unwrap();
        let greedy = allocate_greedy(&p, 4, DEFAULT_CANDIDATE_CAP).unwrap();
        assert!(greedy.groups.contains(&vec![2, 3]), "{:?}", greedy.groups);
        assert_ne!(ee.groups, greedy.groups);
        let total = |a: &PilotAllocation| -> f64 { a.groups.iter().map(|x| p.group_metric(x).unwrap()).sum() };
        assert!(total(&ee) > total(&greedy));
    }

    #[test]
    fn candidate_cap_is_enforced() {
        let p = random_problem(1, 7, 3);
        assert!(matches!(allocate(&p, 12, 5), Err(Error::TooManyCandidates { .. })));
    }

    #[test]
    fn incomplete_allocation_detected() {
        let a = PilotAllocation::from_groups(vec![vec![0, 1]]);
        assert!(matches!(a.validate(3), Err(Error::AllocationIncomplete(2))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn allocations_are_partitions(seed in 0u64..1000, tau in 7usize..=21) {
            let p = random_problem(seed, 7, 3);
            for alloc in [allocate(&p, tau, DEFAULT_CANDIDATE_CAP).unwrap(), allocate_greedy(&p, tau, DEFAULT_CANDIDATE_CAP).unwrap()] {
                prop_assert!(alloc.validate(21).is_ok());
                prop_assert_eq!(alloc.tau(), tau);
            }
            prop_assert_eq!(allocate(&p, tau, DEFAULT_CANDIDATE_CAP).unwrap(), allocate(&p, tau, DEFAULT_CANDIDATE_CAP).unwrap());
        }

        #[test]
        fn rates_invariant_to_common_scaling(seed in 0u64..1000, scale in 1e-3f64..1e3) {
            let p = random_problem(seed, 3, 2);
            let mut q = p.clone();
            q.path_gain.iter_mut().flatten().for_each(|g| *g *= scale);
            q.noise.iter_mut().for_each(|n| *n *= scale);
            let (a, b) = (p.group_rates(&[0, 3, 5]), q.group_rates(&[0, 3, 5]));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300));
            }
        }
    }
}
