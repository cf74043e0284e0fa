//! SINR, rates, MSE, MMSE receivers and the two energy-efficiency objectives.
//!
//! Rates are in nats/s (natural log); energy efficiencies are reported in
//! bit/Joule.

use serde::{Deserialize, Serialize};

use crate::linalg::{inner, norm_sqr, CVector, C64};
use crate::network::Network;
use crate::power::{delta_unchecked, total_power, PowerBreakdown, GBIT_PER_NAT};
use crate::scenario::{complex_vecs, ChannelSet};
use crate::{Error, Result};

/// Bits per nat.
const BITS_PER_NAT: f64 = std::f64::consts::LOG2_E;

/// Beamforming vectors `w_k` (units of sqrt-Watts), one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    #[serde(with = "complex_vecs")]
    pub w: Vec<CVector>,
    pub serving: Vec<usize>,
    pub num_bs: usize,
}

impl BeamformerSet {
    pub fn zeros(channels: &ChannelSet) -> Self {
        let w = (0..channels.num_users())
            .map(|k| CVector::zeros(channels.antennas(channels.serving[k])))
            .collect();
        BeamformerSet { w, serving: channels.serving.clone(), num_bs: channels.num_bs() }
    }

    pub fn from_vectors(w: Vec<CVector>, channels: &ChannelSet) -> Self {
        BeamformerSet { w, serving: channels.serving.clone(), num_bs: channels.num_bs() }
    }

    /// `sum_{k in K_b} ||w_k||^2`.
    pub fn radiated(&self, b: usize) -> f64 {
        self.w.iter().zip(&self.serving).filter(|(_, &s)| s == b).map(|(w, _)| norm_sqr(w)).sum()
    }

    pub fn radiated_per_bs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_bs];
        for (w, &b) in self.w.iter().zip(&self.serving) {
            out[b] += norm_sqr(w);
        }
        out
    }

    pub fn user_powers(&self) -> Vec<f64> {
        self.w.iter().map(norm_sqr).collect()
    }

    /// Largest `sum ||w_k||^2 / P_b - 1` over BSs; nonpositive when feasible.
    pub fn max_power_slack(&self, budgets: &[f64]) -> f64 {
        self.radiated_per_bs()
            .iter()
            .zip(budgets)
            .map(|(p, &pb)| if pb > 0.0 { p / pb - 1.0 } else if *p > 0.0 { f64::INFINITY } else { -1.0 })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Desired amplitude `h_{b_k,k}^H w_k` and interference power
/// `sum_{j != k} |h_{b_j,k}^H w_j|^2` at user `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Received {
    pub desired: C64,
    pub interference: f64,
}

impl Received {
    pub fn sinr(&self, noise: f64) -> f64 {
        self.desired.norm_sqr() / (noise + self.interference)
    }

    /// Total received power plus noise.
    pub fn total(&self, noise: f64) -> f64 {
        self.desired.norm_sqr() + self.interference + noise
    }
}

pub(crate) fn received_at(
    k: usize,
    channels: &ChannelSet,
    w: &[CVector],
    isolated_cells: bool,
) -> Received {
    let bk = channels.serving[k];
    let mut desired = C64::new(0.0, 0.0);
    let mut interference = 0.0;
    for (j, wj) in w.iter().enumerate() {
        let bj = channels.serving[j];
        if isolated_cells && bj != bk {
            continue;
        }
        let a = inner(&channels.h[bj][k], wj);
        if j == k {
            desired = a;
        } else {
            interference += a.norm_sqr();
        }
    }
    Received { desired, interference }
}

pub(crate) fn check_shapes(channels: &ChannelSet, w: &[CVector]) -> Result<()> {
    if w.len() != channels.num_users() {
        return Err(Error::Shape(format!(
            "{} beamformers for {} users",
            w.len(),
            channels.num_users()
        )));
    }
    for (j, wj) in w.iter().enumerate() {
        let n = channels.antennas(channels.serving[j]);
        if wj.len() != n {
            return Err(Error::Shape(format!("beamformer {j} has length {}, expected {n}", wj.len())));
        }
    }
    Ok(())
}

pub fn received(k: usize, channels: &ChannelSet, w: &BeamformerSet) -> Result<Received> {
    check_shapes(channels, &w.w)?;
    Ok(received_at(k, channels, &w.w, false))
}

/// `Gamma_k = |h_{b_k,k}^H w_k|^2 / (N0 + sum_{j != k} |h_{b_j,k}^H w_j|^2)`.
pub fn sinr(k: usize, channels: &ChannelSet, w: &BeamformerSet, n0: f64) -> Result<f64> {
    Ok(received(k, channels, w)?.sinr(n0))
}

/// `u_k = h_{b_k,k}^H w_k / (sum_j |h_{b_j,k}^H w_j|^2 + N0)`.
pub fn mmse_receiver(k: usize, channels: &ChannelSet, w: &BeamformerSet, n0: f64) -> Result<C64> {
    let r = received(k, channels, w)?;
    Ok(r.desired / r.total(n0))
}

/// `|u|^2 (sum_j |h^H w_j|^2 + N0) - 2 Re(conj(u) h^H w_k) + 1`.
pub fn mse(k: usize, channels: &ChannelSet, w: &BeamformerSet, u: C64, n0: f64) -> Result<f64> {
    let r = received(k, channels, w)?;
    Ok(mse_from(&r, u, n0))
}

#[inline]
pub(crate) fn mse_from(r: &Received, u: C64, noise: f64) -> f64 {
    // |u|^2 T - 2 Re(conj(u) a) + 1 rearranged as |u T - a|^2 / T + (T - |a|^2) / T
    let total = r.total(noise);
    if !(total > 0.0) || u == C64::new(0.0, 0.0) {
        return 1.0;
    }
    (u * total - r.desired).norm_sqr() / total + (r.interference + noise) / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector {
    pub gamma: Vec<f64>,
    /// nats/s.
    pub r_user: Vec<f64>,
    /// nats/s.
    pub r_bs: Vec<f64>,
    /// Hz, per BS.
    pub alpha: Vec<f64>,
}

impl RateVector {
    pub fn sum_rate(&self) -> f64 {
        self.r_bs.iter().sum()
    }
}

pub fn sinrs(net: &Network, w: &BeamformerSet) -> Result<Vec<f64>> {
    check_shapes(&net.channels, &w.w)?;
    Ok((0..net.num_users())
        .map(|k| received_at(k, &net.channels, &w.w, net.isolated_cells).sinr(net.noise[k]))
        .collect())
}

/// `r_k = alpha ln(1 + Gamma_k)`, summed per serving BS.
pub fn rates(net: &Network, w: &BeamformerSet) -> Result<RateVector> {
    let gamma = sinrs(net, w)?;
    let r_user: Vec<f64> =
        gamma.iter().enumerate().map(|(k, g)| net.alpha[net.serving(k)] * g.ln_1p()).collect();
    let mut r_bs = vec![0.0; net.num_bs()];
    for (k, r) in r_user.iter().enumerate() {
        r_bs[net.serving(k)] += r;
    }
    Ok(RateVector { gamma, r_user, r_bs, alpha: net.alpha.clone() })
}

/// Everything reported about one beamformer set on one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rates: RateVector,
    pub power: PowerBreakdown,
    /// bit/J.
    pub network_ee: f64,
    /// bit/J per BS.
    pub per_cell_ee: Vec<f64>,
}

impl Evaluation {
    pub fn wsum_ee(&self, weights: &[f64]) -> f64 {
        self.per_cell_ee.iter().zip(weights).map(|(e, w)| e * w).sum()
    }
}

pub fn evaluate(net: &Network, w: &BeamformerSet) -> Result<Evaluation> {
    let rates = rates(net, w)?;
    let power = total_power(&w.radiated_per_bs(), &rates.r_bs, &net.circuit, &net.power)?;
    let network_ee = rates.sum_rate() * BITS_PER_NAT / power.total;
    let per_cell_ee = rates
        .r_bs
        .iter()
        .zip(&power.per_bs)
        .map(|(r, p)| r * BITS_PER_NAT / p)
        .collect();
    Ok(Evaluation { rates, power, network_ee, per_cell_ee })
}

/// `sum_b R_b / (g(w) + P_RD sum_b delta(R_b))` in bit/J.
pub fn network_ee(net: &Network, w: &BeamformerSet) -> Result<f64> {
    Ok(evaluate(net, w)?.network_ee)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsumEe {
    pub value: f64,
    pub per_cell: Vec<f64>,
}

/// `sum_b omega_b R_b / (g_b + P_RD delta(R_b))` in bit/J.
pub fn wsum_ee(net: &Network, w: &BeamformerSet, weights: &[f64]) -> Result<WsumEe> {
    if weights.len() != net.num_bs() {
        return Err(Error::Shape(format!("{} weights for {} BSs", weights.len(), net.num_bs())));
    }
    if let Some(bad) = weights.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::Domain(format!("weights must be nonnegative, got {bad}")));
    }
    let e = evaluate(net, w)?;
    Ok(WsumEe { value: e.wsum_ee(weights), per_cell: e.per_cell_ee })
}

/// Objectives under the per-user rate-dependent model, where BS `b` draws
/// `sum_{k in K_b} P_RD delta(r_k)` instead of `P_RD delta(r_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerUserObjectives {
    pub network_ee: f64,
    pub wsum_ee: f64,
    pub per_cell_ee: Vec<f64>,
}

pub fn per_user_ee_objectives(
    net: &Network,
    w: &BeamformerSet,
    weights: &[f64],
) -> Result<PerUserObjectives> {
    let rates = rates(net, w)?;
    let radiated = w.radiated_per_bs();
    let mut per_bs_power = vec![0.0; net.num_bs()];
    for b in 0..net.num_bs() {
        per_bs_power[b] = radiated[b] / net.power.eta + net.circuit[b];
    }
    for (k, r) in rates.r_user.iter().enumerate() {
        per_bs_power[net.serving(k)] += net.power.p_rd * delta_unchecked(r * GBIT_PER_NAT, net.power.m);
    }
    let total: f64 = per_bs_power.iter().sum();
    let per_cell_ee: Vec<f64> =
        rates.r_bs.iter().zip(&per_bs_power).map(|(r, p)| r * BITS_PER_NAT / p).collect();
    Ok(PerUserObjectives {
        network_ee: rates.sum_rate() * BITS_PER_NAT / total,
        wsum_ee: per_cell_ee.iter().zip(weights).map(|(e, w)| e * w).sum(),
        per_cell_ee,
    })
}

/// Jain's index `(sum x)^2 / (n sum x^2)`.
pub fn fairness_index(values: &[f64]) -> Result<f64> {
    if values.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("fairness index needs nonnegative values".into()));
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(Error::Domain("fairness index of all-zero values".into()));
    }
    Ok(sum * sum / (values.len() as f64 * sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ComplexityCharge, Network};
    use crate::power::PowerModelParams;
    use crate::scenario::{build_layout, drop_rng, generate_drop, ScenarioConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn vec_of(xs: &[C64]) -> CVector {
        CVector::from_vec(xs.to_vec())
    }

    fn single_bs(h: Vec<CVector>) -> ChannelSet {
        let n = h.len();
        ChannelSet { path_gain: vec![vec![1.0; n]], serving: vec![0; n], h: vec![h] }
    }

    fn drop_network(seed: u64, cells: usize, users: usize, p_rd: f64, m: f64) -> Network {
        let scen = ScenarioConfig {
            cells,
            users_per_cell: users,
            wrap_around: cells == 7,
            seed,
            ..Default::default()
        };
        let layout = build_layout(&scen).unwrap();
        let drop = generate_drop(&scen, &layout, 0).unwrap();
        let power = PowerModelParams { p_rd, m, ..Default::default() };
        Network::new(drop.channels, &scen, &power, ComplexityCharge::coordinated(20)).unwrap()
    }

    fn random_beamformers<R: Rng>(net: &Network, rng: &mut R) -> BeamformerSet {
        let w = (0..net.num_users())
            .map(|k| {
                let n = net.channels.antennas(net.serving(k));
                CVector::from_iterator(
                    n,
                    (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.3),
                )
            })
            .collect();
        BeamformerSet::from_vectors(w, &net.channels)
    }

    #[test]
    fn sinr_examples() {
        let ch = single_bs(vec![vec_of(&[c(1.0, 0.0), c(0.0, 0.0)])]);
        let w = BeamformerSet::from_vectors(vec![vec_of(&[c(1.0, 0.0), c(0.0, 0.0)])], &ch);
        assert!((sinr(0, &ch, &w, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let zero = BeamformerSet::zeros(&ch);
        assert_eq!(sinr(0, &ch, &zero, 1.0).unwrap(), 0.0);

        // equal desired and interfering power, vanishing noise
        let ch2 = single_bs(vec![vec_of(&[c(1.0, 0.0)]), vec_of(&[c(1.0, 0.0)])]);
        let w2 = BeamformerSet::from_vectors(vec![vec_of(&[c(1.0, 0.0)]), vec_of(&[c(0.0, 1.0)])], &ch2);
        let g = sinr(0, &ch2, &w2, 1e-12).unwrap();
        assert!((g - 1.0).abs() < 1e-9);

        let bad = BeamformerSet::from_vectors(vec![vec_of(&[c(1.0, 0.0)])], &ch);
        assert!(matches!(sinr(0, &ch, &bad, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn rate_examples() {
        let net = drop_network(1, 7, 2, 2.4, 1.2);
        assert!((net.alpha[0] - 14.4e6).abs() < 1e-3);
        let zero = BeamformerSet::zeros(&net.channels);
        let r = rates(&net, &zero).unwrap();
        assert!(r.r_user.iter().all(|&x| x == 0.0));
        assert_eq!(network_ee(&net, &zero).unwrap(), 0.0);

        // Gamma = e - 1 gives exactly alpha nats/s
        let h = vec_of(&[c(1.0, 0.0)]);
        let ch = single_bs(vec![h]);
        let w = BeamformerSet::from_vectors(vec![vec_of(&[c((std::f64::consts::E - 1.0).sqrt(), 0.0)])], &ch);
        let single = Network {
            noise: vec![1.0],
            alpha: vec![14.4e6],
            budgets: vec![10.0],
            circuit: vec![5.0],
            power: PowerModelParams::default(),
            isolated_cells: false,
            channels: ch,
        };
        let r = rates(&single, &w).unwrap();
        assert!((r.r_user[0] - 14.4e6).abs() < 1e-6);
    }

    #[test]
    fn receiver_and_mse_examples() {
        let ch = single_bs(vec![vec_of(&[c(1.0, 0.0)])]);
        let w = BeamformerSet::from_vectors(vec![vec_of(&[c(1.0, 0.0)])], &ch);
        let u = mmse_receiver(0, &ch, &w, 1.0).unwrap();
        assert!((u - c(0.5, 0.0)).norm() < 1e-15);
        assert!((mse(0, &ch, &w, u, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((mse(0, &ch, &w, c(0.0, 0.0), 1.0).unwrap() - 1.0).abs() < 1e-15);
        let zero = BeamformerSet::zeros(&ch);
        assert_eq!(mmse_receiver(0, &ch, &zero, 1.0).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn receiver_scales_with_channel() {
        let net = drop_network(3, 7, 2, 2.4, 1.2);
        let mut rng = drop_rng(9, 0);
        let w = random_beamformers(&net, &mut rng);
        let s = 3.0;
        let scaled = net.channels.scaled(s);
        for k in 0..net.num_users() {
            let u = mmse_receiver(k, &net.channels, &w, 1e-13).unwrap();
            let us = mmse_receiver(k, &scaled, &w, 1e-13).unwrap();
            let r = received(k, &net.channels, &w).unwrap();
            // direct recomputation with every channel multiplied by s
            let expect = r.desired * s / (s * s * (r.desired.norm_sqr() + r.interference) + 1e-13);
            assert!((us - expect).norm() <= 1e-10 * expect.norm().max(1e-300));
            assert!(u.norm() > 0.0);
        }
    }

    #[test]
    fn single_user_ee_matches_composition() {
        let net = drop_network(4, 1, 1, 2.4, 1.2);
        let h = net.channels.own(0).clone();
        let w = BeamformerSet::from_vectors(vec![&h * c(0.2 / h.norm(), 0.0)], &net.channels);
        let snr = h.norm_squared() * 0.04 / net.noise[0];
        let rate = net.alpha[0] * snr.ln_1p();
        let power = 0.04 / net.power.eta + net.circuit[0] + net.power.p_rd * (rate * GBIT_PER_NAT).powf(1.2);
        let expect = rate * BITS_PER_NAT / power;
        let ee = network_ee(&net, &w).unwrap();
        assert!((ee - expect).abs() <= 1e-12 * expect);
        let ws = wsum_ee(&net, &w, &[1.0]).unwrap();
        assert!((ws.value - ee).abs() <= 1e-12 * ee);
    }

    #[test]
    fn linear_rate_power_shifts_inverse_ee() {
        let net = drop_network(5, 7, 2, 2.4, 1.0);
        let mut rng = drop_rng(5, 1);
        let w = random_beamformers(&net, &mut rng);
        let with = network_ee(&net, &w).unwrap() * 1e-9; // Gbit/J
        let without = network_ee(&net.with_p_rd(0.0), &w).unwrap() * 1e-9;
        assert!((1.0 / with - 1.0 / without - 2.4).abs() < 1e-10);
    }

    #[test]
    fn weighted_sum_linearity() {
        let net = drop_network(6, 7, 2, 2.4, 1.2);
        let mut rng = drop_rng(6, 1);
        let w = random_beamformers(&net, &mut rng);
        let ones = vec![1.0; 7];
        let base = wsum_ee(&net, &w, &ones).unwrap();
        assert_eq!(wsum_ee(&net, &w, &[0.0; 7]).unwrap().value, 0.0);
        let mut doubled = ones.clone();
        doubled[3] = 2.0;
        let d = wsum_ee(&net, &w, &doubled).unwrap();
        assert!((d.value - base.value - base.per_cell[3]).abs() <= 1e-12 * base.value);
        assert!(wsum_ee(&net, &w, &[1.0; 3]).is_err());
        assert!(wsum_ee(&net, &w, &[-1.0; 7]).is_err());
    }

    #[test]
    fn per_user_model_examples() {
        let mut rng = drop_rng(7, 1);
        let net = drop_network(7, 7, 2, 2.4, 1.0);
        let w = random_beamformers(&net, &mut rng);
        let ones = vec![1.0; 7];
        let per_user = per_user_ee_objectives(&net, &w, &ones).unwrap();
        let e = evaluate(&net, &w).unwrap();
        assert!((per_user.network_ee - e.network_ee).abs() <= 1e-12 * e.network_ee);
        assert!((per_user.wsum_ee - e.wsum_ee(&ones)).abs() <= 1e-12 * e.wsum_ee(&ones));

        let net1 = drop_network(7, 7, 1, 2.4, 1.7);
        let w1 = random_beamformers(&net1, &mut rng);
        let pu = per_user_ee_objectives(&net1, &w1, &ones).unwrap();
        let e1 = evaluate(&net1, &w1).unwrap();
        assert!((pu.network_ee - e1.network_ee).abs() <= 1e-12 * e1.network_ee);

        // m = 2, two users at equal rate r: 2 r^2 versus (2r)^2
        let r: f64 = 0.3;
        assert!((2.0 * delta_unchecked(r, 2.0) - 2.0 * r * r).abs() < 1e-15);
        assert!((delta_unchecked(2.0 * r, 2.0) - 4.0 * r * r).abs() < 1e-15);
    }

    #[test]
    fn fairness_examples() {
        assert!((fairness_index(&[3.0; 7]).unwrap() - 1.0).abs() < 1e-15);
        let mut one = vec![0.0; 7];
        one[2] = 5.0;
        assert!((fairness_index(&one).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert!((fairness_index(&[1.0, 2.0]).unwrap() - 0.9).abs() < 1e-15);
        assert!(fairness_index(&[0.0, 0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sinr_mse_identity_and_mmse_optimality(seed in 0u64..10_000, pr in -1.0f64..1.0, pi in -1.0f64..1.0) {
            let net = drop_network(seed % 5 + 1, 7, 2, 2.4, 1.2);
            let mut rng = drop_rng(seed, 2);
            let w = random_beamformers(&net, &mut rng);
            for k in 0..net.num_users() {
                let n0 = net.noise[k];
                let g = sinr(k, &net.channels, &w, n0).unwrap();
                let u = mmse_receiver(k, &net.channels, &w, n0).unwrap();
                let e = mse(k, &net.channels, &w, u, n0).unwrap();
                prop_assert!((1.0 / e - 1.0 - g).abs() <= 1e-9 * (1.0 + g));
                let perturbed = u + u.norm().max(1e-3) * C64::new(pr, pi) * 0.1;
                prop_assert!(mse(k, &net.channels, &w, perturbed, n0).unwrap() >= e - 1e-12);
            }
        }

        #[test]
        fn phase_rotation_changes_nothing(seed in 0u64..10_000, phase in 0.0f64..6.3, who in 0usize..14) {
            let net = drop_network(seed % 3 + 1, 7, 2, 2.4, 1.2);
            let mut rng = drop_rng(seed, 3);
            let w = random_beamformers(&net, &mut rng);
            let mut rotated = w.clone();
            rotated.w[who] *= C64::from_polar(1.0, phase);
            let a = evaluate(&net, &w).unwrap();
            let b = evaluate(&net, &rotated).unwrap();
            for (x, y) in a.rates.gamma.iter().zip(&b.rates.gamma) {
                prop_assert!((x - y).abs() <= 1e-10 * x.max(1.0));
            }
            prop_assert!((a.network_ee - b.network_ee).abs() <= 1e-10 * a.network_ee);
            let ones = vec![1.0; 7];
            prop_assert!((a.wsum_ee(&ones) - b.wsum_ee(&ones)).abs() <= 1e-10 * a.wsum_ee(&ones));
            prop_assert!(a.power.total > 0.0);
        }
    }
}
