//! Network geometry, user drops, path gains and Rayleigh channels.
//!
//! Users are indexed cell-major: user `k = b * L + l` is the `l`-th user of
//! cell `b`, and is served by BS `b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{CVector, C64};
use crate::pilots::PilotAllocation;
use crate::{Error, Result};

/// -98 dBm in Watts.
pub const DEFAULT_NOISE_W: f64 = 1.584_893_192_461_113_5e-13;
/// 27 dBm in Watts.
pub const DEFAULT_TX_POWER_W: f64 = 0.501_187_233_627_272_2;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cells: usize,
    pub antennas: usize,
    pub users_per_cell: usize,
    /// Meters.
    pub inter_bs_distance: f64,
    /// Meters.
    pub cell_radius: f64,
    pub wrap_around: bool,
    /// Hz.
    pub bandwidth: f64,
    /// Symbols per coherence block.
    pub coherence_uses: usize,
    /// Uplink pilot resources; `None` means one per user (orthogonal).
    pub tau_ul: Option<usize>,
    /// Downlink pilot resources; `None` means one per user.
    pub tau_dl: Option<usize>,
    /// Watts.
    pub noise_power: f64,
    /// Per-BS transmit power budget, Watts.
    pub max_tx_power: f64,
    pub shadowing_std_db: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            cells: 7,
            antennas: 4,
            users_per_cell: 2,
            inter_bs_distance: 120.0,
            cell_radius: 60.0,
            wrap_around: true,
            bandwidth: 20e6,
            coherence_uses: 100,
            tau_ul: None,
            tau_dl: None,
            noise_power: DEFAULT_NOISE_W,
            max_tx_power: DEFAULT_TX_POWER_W,
            shadowing_std_db: 8.0,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn total_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    pub fn tau_ul(&self) -> usize {
        self.tau_ul.unwrap_or_else(|| self.total_users())
    }

    pub fn tau_dl(&self) -> usize {
        self.tau_dl.unwrap_or_else(|| self.total_users())
    }

    /// `1 - (tau_ul + tau_dl) / U`, the share of the coherence block left for data.
    pub fn data_fraction(&self) -> f64 {
        1.0 - (self.tau_ul() + self.tau_dl()) as f64 / self.coherence_uses as f64
    }

    /// Effective bandwidth `alpha` in Hz; rates are `alpha * ln(1 + sinr)` nats/s.
    pub fn alpha(&self) -> f64 {
        self.data_fraction() * self.bandwidth
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.cells < 1 {
            bad.push("cells must be >= 1".to_string());
        }
        if self.antennas < 1 {
            bad.push("antennas must be >= 1".to_string());
        }
        if self.users_per_cell < 1 {
            bad.push("users_per_cell must be >= 1".to_string());
        }
        if self.tau_ul() < self.users_per_cell {
            bad.push(format!("tau_ul={} is below users_per_cell={}", self.tau_ul(), self.users_per_cell));
        }
        if self.tau_dl() < self.users_per_cell {
            bad.push(format!("tau_dl={} is below users_per_cell={}", self.tau_dl(), self.users_per_cell));
        }
        if self.tau_ul() + self.tau_dl() >= self.coherence_uses {
            bad.push(format!(
                "tau_ul + tau_dl = {} must be below coherence_uses = {}",
                self.tau_ul() + self.tau_dl(),
                self.coherence_uses
            ));
        }
        if !(self.bandwidth > 0.0) {
            bad.push("bandwidth must be positive".to_string());
        }
        if !(self.noise_power > 0.0) {
            bad.push("noise_power must be positive".to_string());
        }
        if !(self.max_tx_power >= 0.0) {
            bad.push("max_tx_power must be nonnegative".to_string());
        }
        if !(self.inter_bs_distance > 0.0) || !(self.cell_radius > 0.0) {
            bad.push("distances must be positive".to_string());
        }
        if !(self.shadowing_std_db >= 0.0) {
            bad.push("shadowing_std_db must be nonnegative".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

/// BS positions plus the wrap-around displacement set.
#[derive(Debug, Clone)]
pub struct Layout {
    pub bs_positions: Vec<[f64; 2]>,
    /// Translations of the whole cluster; always contains the zero shift.
    pub images: Vec<[f64; 2]>,
}

impl Layout {
    /// Nearest-image distance between two points.
    pub fn distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        self.images
            .iter()
            .map(|s| (p[0] - q[0] - s[0]).hypot(p[1] - q[1] - s[1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn direct_distance(p: [f64; 2], q: [f64; 2]) -> f64 {
        (p[0] - q[0]).hypot(p[1] - q[1])
    }
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Builds the hexagonal layout: BS 0 at the origin and up to six neighbours
/// on the first ring. With wrap-around the 7-cell cluster is tiled by the
/// six translations `R(60 deg * i) * (2 a1 + a2)`.
pub fn build_layout(config: &ScenarioConfig) -> Result<Layout> {
    let b = config.cells;
    let d = config.inter_bs_distance;
    if b == 0 {
        return Err(Error::InvalidConfig("cells must be >= 1".into()));
    }
    if b > 7 {
        return Err(Error::UnsupportedGeometry(format!("{b} cells; at most 7 are supported")));
    }
    if config.wrap_around && b != 7 && b != 1 {
        return Err(Error::UnsupportedGeometry(format!(
            "wrap-around requires 7 cells, got {b}"
        )));
    }
    let third = std::f64::consts::FRAC_PI_3;
    let mut bs_positions = vec![[0.0, 0.0]];
    for i in 0..b.saturating_sub(1) {
        bs_positions.push(rotate([d, 0.0], third * i as f64));
    }
    let mut images = vec![[0.0, 0.0]];
    if config.wrap_around && b == 7 {
        let t = [2.5 * d, 0.5 * 3f64.sqrt() * d];
        for i in 0..6 {
            images.push(rotate(t, third * i as f64));
        }
    }
    Ok(Layout { bs_positions, images })
}

/// User positions and their serving BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub positions: Vec<[f64; 2]>,
    pub serving: Vec<usize>,
}

/// Places `users_per_cell` users per cell on the circle of radius
/// `cell_radius` around the serving BS, at uniform angles.
pub fn drop_users<R: Rng>(layout: &Layout, config: &ScenarioConfig, rng: &mut R) -> Placement {
    let mut positions = Vec::new();
    let mut serving = Vec::new();
    for (b, bs) in layout.bs_positions.iter().enumerate() {
        for _ in 0..config.users_per_cell {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let (s, c) = theta.sin_cos();
            positions.push([bs[0] + config.cell_radius * c, bs[1] + config.cell_radius * s]);
            serving.push(b);
        }
    }
    Placement { positions, serving }
}

/// Path loss in dB: `35 + 30 log10(d) + shadow_db`.
pub fn path_loss_db(distance_m: f64, shadow_db: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
    }
    Ok(35.0 + 30.0 * distance_m.log10() + shadow_db)
}

pub fn gain_from_loss_db(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Channel vectors `h[b][k]` from every BS to every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    #[serde(with = "complex_nested")]
    pub h: Vec<Vec<CVector>>,
    /// Linear path gain including shadowing, `[b][k]`.
    pub path_gain: Vec<Vec<f64>>,
    pub serving: Vec<usize>,
}

impl ChannelSet {
    pub fn num_bs(&self) -> usize {
        self.h.len()
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    pub fn antennas(&self, b: usize) -> usize {
        self.h[b].first().map_or(0, |v| v.len())
    }

    pub fn channel(&self, b: usize, k: usize) -> &CVector {
        &self.h[b][k]
    }

    /// Channel from the serving BS of `k`.
    pub fn own(&self, k: usize) -> &CVector {
        &self.h[self.serving[k]][k]
    }

    pub fn users_of(&self, b: usize) -> Vec<usize> {
        (0..self.num_users()).filter(|&k| self.serving[k] == b).collect()
    }

    pub fn cell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_bs()];
        for &b in &self.serving {
            sizes[b] += 1;
        }
        sizes
    }

    /// Multiplies every channel vector by `factor`.
    pub fn scaled(&self, factor: f64) -> ChannelSet {
        let mut out = self.clone();
        for row in &mut out.h {
            for v in row {
                *v *= C64::new(factor, 0.0);
            }
        }
        for row in &mut out.path_gain {
            for g in row {
                *g *= factor * factor;
            }
        }
        out
    }
}

/// Draws i.i.d. `CN(0, gain)` entries for every BS-user link.
pub fn generate_channels<R: Rng>(
    path_gain: Vec<Vec<f64>>,
    serving: Vec<usize>,
    antennas: usize,
    rng: &mut R,
) -> ChannelSet {
    let h = path_gain
        .iter()
        .map(|row| {
            row.iter()
                .map(|&g| {
                    let sd = (g / 2.0).sqrt();
                    CVector::from_iterator(
                        antennas,
                        (0..antennas).map(|_| {
                            let re: f64 = StandardNormal.sample(rng);
                            let im: f64 = StandardNormal.sample(rng);
                            C64::new(sd * re, sd * im)
                        }),
                    )
                })
                .collect()
        })
        .collect();
    ChannelSet { h, path_gain, serving }
}

/// Path gains `[b][k]` with independent log-normal shadowing per link.
pub fn path_gains<R: Rng>(
    layout: &Layout,
    placement: &Placement,
    shadowing_std_db: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let shadow = Normal::new(0.0, shadowing_std_db).map_err(|e| Error::Domain(e.to_string()))?;
    let mut gains = Vec::with_capacity(layout.bs_positions.len());
    for bs in &layout.bs_positions {
        let mut row = Vec::with_capacity(placement.positions.len());
        for p in &placement.positions {
            let d = layout.distance(*p, *bs);
            let loss = path_loss_db(d, shadow.sample(rng))?;
            row.push(gain_from_loss_db(loss));
        }
        gains.push(row);
    }
    Ok(gains)
}

/// One channel realization of the network.
#[derive(Debug, Clone)]
pub struct Drop {
    pub index: u64,
    pub placement: Placement,
    pub channels: ChannelSet,
}

/// Random stream for drop `index`: seeded by `seed`, one ChaCha stream per drop,
/// so drops can be generated in any order or in parallel.
pub fn drop_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_drop(config: &ScenarioConfig, layout: &Layout, index: u64) -> Result<Drop> {
    config.validate()?;
    let mut rng = drop_rng(config.seed, index);
    let placement = drop_users(layout, config, &mut rng);
    let gains = path_gains(layout, &placement, config.shadowing_std_db, &mut rng)?;
    let channels = generate_channels(gains, placement.serving.clone(), config.antennas, &mut rng);
    Ok(Drop { index, placement, channels })
}

/// Channels as observed by the BSs after uplink pilot reuse.
#[derive(Debug, Clone)]
pub struct ObservedChannelSet {
    pub channels: ChannelSet,
    pub pilot_group: Vec<usize>,
}

/// Adds the channels of every co-pilot user to each user's observed channel.
pub fn contaminate(channels: &ChannelSet, alloc: &PilotAllocation) -> Result<ObservedChannelSet> {
    let n_users = channels.num_users();
    let mut pilot_group = vec![usize::MAX; n_users];
    for (g, members) in alloc.groups.iter().enumerate() {
        for &k in members {
            if k >= n_users {
                return Err(Error::Domain(format!("pilot group {g} names unknown user {k}")));
            }
            if pilot_group[k] != usize::MAX {
                return Err(Error::Domain(format!("user {k} assigned to two pilot groups")));
            }
            pilot_group[k] = g;
        }
    }
    if let Some(k) = pilot_group.iter().position(|&g| g == usize::MAX) {
        return Err(Error::AllocationIncomplete(k));
    }
    let mut observed = channels.clone();
    for b in 0..channels.num_bs() {
        for members in &alloc.groups {
            if members.len() < 2 {
                continue;
            }
            let mut sum = CVector::zeros(channels.antennas(b));
            for &j in members {
                sum += &channels.h[b][j];
            }
            for &k in members {
                observed.h[b][k] = sum.clone();
            }
        }
    }
    Ok(ObservedChannelSet { channels: observed, pilot_group })
}

/// Serde adapter storing complex vectors as `[re, im]` pairs.
pub(crate) mod complex_nested {
    use super::{CVector, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(h: &[Vec<CVector>], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<Vec<Vec<[f64; 2]>>> = h
            .iter()
            .map(|row| row.iter().map(|v| v.iter().map(|c| [c.re, c.im]).collect()).collect())
            .collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<CVector>>, D::Error> {
        let pairs = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        Ok(pairs
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| CVector::from_iterator(v.len(), v.into_iter().map(|p| C64::new(p[0], p[1]))))
                    .collect()
            })
            .collect())
    }
}

pub(crate) mod complex_vecs {
    use super::{CVector, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(w: &[CVector], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<Vec<[f64; 2]>> = w.iter().map(|v| v.iter().map(|c| [c.re, c.im]).collect()).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVector>, D::Error> {
        let pairs = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(pairs
            .into_iter()
            .map(|v| CVector::from_iterator(v.len(), v.into_iter().map(|p| C64::new(p[0], p[1]))))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilots::PilotAllocation;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn seven_cell_layout_neighbours_at_inter_bs_distance() {
        let layout = build_layout(&ScenarioConfig::default()).unwrap();
        assert_eq!(layout.bs_positions.len(), 7);
        assert_eq!(layout.bs_positions[0], [0.0, 0.0]);
        for b in 1..7 {
            assert!(close(Layout::direct_distance(layout.bs_positions[b], [0.0, 0.0]), 120.0, 1e-9));
        }
        // every pair of distinct cells is adjacent under wrap-around
        for i in 0..7 {
            for j in 0..7 {
                let p = layout.bs_positions[i];
                let q = layout.bs_positions[j];
                let wrap = layout.distance(p, q);
                assert!(wrap <= Layout::direct_distance(p, q) + 1e-12);
                if i != j {
                    assert!(close(wrap, 120.0, 1e-9), "{i},{j}: {wrap}");
                }
            }
        }
    }

    #[test]
    fn single_cell_layout_has_no_images() {
        let cfg = ScenarioConfig { cells: 1, ..Default::default() };
        let layout = build_layout(&cfg).unwrap();
        assert_eq!(layout.bs_positions, vec![[0.0, 0.0]]);
        assert_eq!(layout.images.len(), 1);
    }

    #[test]
    fn wrap_around_requires_seven_cells() {
        let cfg = ScenarioConfig { cells: 3, ..Default::default() };
        assert!(matches!(build_layout(&cfg), Err(Error::UnsupportedGeometry(_))));
        let cfg = ScenarioConfig { cells: 3, wrap_around: false, ..Default::default() };
        assert_eq!(build_layout(&cfg).unwrap().bs_positions.len(), 3);
    }

    #[test]
    fn users_sit_on_the_cell_edge() {
        let cfg = ScenarioConfig::default();
        let layout = build_layout(&cfg).unwrap();
        let drop = generate_drop(&cfg, &layout, 3).unwrap();
        for (k, p) in drop.placement.positions.iter().enumerate() {
            let b = drop.placement.serving[k];
            assert!(close(layout.distance(*p, layout.bs_positions[b]), 60.0, 1e-9));
        }
    }

    #[test]
    fn zero_users_give_empty_placement() {
        let cfg = ScenarioConfig { users_per_cell: 0, ..Default::default() };
        let layout = build_layout(&cfg).unwrap();
        let mut rng = drop_rng(1, 0);
        let p = drop_users(&layout, &cfg, &mut rng);
        assert!(p.positions.is_empty());
    }

    #[test]
    fn drops_are_deterministic_per_seed() {
        let cfg = ScenarioConfig::default();
        let layout = build_layout(&cfg).unwrap();
        let a = generate_drop(&cfg, &layout, 5).unwrap();
        let b = generate_drop(&cfg, &layout, 5).unwrap();
        assert_eq!(a.placement, b.placement);
        assert_eq!(a.channels, b.channels);
        let c = generate_drop(&cfg, &layout, 6).unwrap();
        assert_ne!(a.channels, c.channels);
    }

    #[test]
    fn path_loss_values() {
        assert!(close(path_loss_db(1.0, 0.0).unwrap(), 35.0, 1e-12));
        // 35 + 30 log10(60)
        assert!(close(path_loss_db(60.0, 0.0).unwrap(), 88.344_537_511_509_32, 1e-9));
        let diff = path_loss_db(120.0, 0.0).unwrap() - path_loss_db(60.0, 0.0).unwrap();
        assert!(close(diff, 9.030_899_869_919_434, 1e-9));
        assert!(path_loss_db(0.0, 0.0).is_err());
        assert!(path_loss_db(-3.0, 0.0).is_err());
    }

    #[test]
    fn zero_gain_gives_zero_channel() {
        let mut rng = drop_rng(1, 0);
        let ch = generate_channels(vec![vec![0.0]], vec![0], 4, &mut rng);
        assert_eq!(ch.h[0][0].norm(), 0.0);
    }

    #[test]
    fn rayleigh_entries_have_unit_second_moment() {
        let mut rng = drop_rng(42, 0);
        let n = 100_000;
        let ch = generate_channels(vec![vec![1.0; n]], vec![0; n], 1, &mut rng);
        let mean: f64 = ch.h[0].iter().map(|v| v[0].norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn orthogonal_allocation_leaves_channels_unchanged() {
        let cfg = ScenarioConfig::default();
        let layout = build_layout(&cfg).unwrap();
        let drop = generate_drop(&cfg, &layout, 0).unwrap();
        let n = drop.channels.num_users();
        let alloc = PilotAllocation::orthogonal(n);
        let obs = contaminate(&drop.channels, &alloc).unwrap();
        assert_eq!(obs.channels.h, drop.channels.h);
    }

    #[test]
    fn shared_pilot_adds_channels_symmetrically() {
        let cfg = ScenarioConfig::default();
        let layout = build_layout(&cfg).unwrap();
        let ch = generate_drop(&cfg, &layout, 0).unwrap().channels;
        let n = ch.num_users();
        let mut groups: Vec<Vec<usize>> = vec![vec![0, 5]];
        groups.extend((1..n).filter(|&k| k != 5).map(|k| vec![k]));
        let alloc = PilotAllocation::from_groups(groups);
        let obs = contaminate(&ch, &alloc).unwrap();
        for b in 0..ch.num_bs() {
            let expect = &ch.h[b][0] + &ch.h[b][5];
            assert!((&obs.channels.h[b][0] - expect).norm() < 1e-30);
            // both members observe the same superposition
            assert_eq!(obs.channels.h[b][0], obs.channels.h[b][5]);
            let d0 = &obs.channels.h[b][0] - &ch.h[b][0];
            assert!((d0 - &ch.h[b][5]).norm() <= 1e-12 * ch.h[b][5].norm());
            assert_eq!(obs.channels.h[b][1], ch.h[b][1]);
        }
    }

    #[test]
    fn missing_user_is_reported() {
        let cfg = ScenarioConfig { cells: 1, users_per_cell: 2, ..Default::default() };
        let layout = build_layout(&cfg).unwrap();
        let ch = generate_drop(&cfg, &layout, 0).unwrap().channels;
        let alloc = PilotAllocation::from_groups(vec![vec![0]]);
        assert!(matches!(contaminate(&ch, &alloc), Err(Error::AllocationIncomplete(1))));
    }

    #[test]
    fn config_validation_lists_offending_fields() {
        let cfg = ScenarioConfig { tau_ul: Some(1), coherence_uses: 10, ..Default::default() };
        match cfg.validate() {
            Err(Error::Validation(msgs)) => assert!(msgs.len() >= 2, "{msgs:?}"),
            other => panic!("{other:?}"),
        }
        assert!(close(ScenarioConfig::default().alpha(), 14.4e6, 1e-3));
        assert!(close(dbm_to_watts(-98.0), DEFAULT_NOISE_W, 1e-25));
        assert!(close(dbm_to_watts(27.0), DEFAULT_TX_POWER_W, 1e-15));
    }
}
