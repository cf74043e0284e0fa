//! Closed-form KKT update engine for weighted-sum EE and network EE.
//!
//! The problem is handled through its MSE reformulation: for fixed receivers
//! `u` and a fixed linearization point `(gamma^(n), r^(n), z^(n))` the
//! approximated problem is convex, and its KKT conditions give closed-form
//! updates of the beamformers `w`, the auxiliaries `(gamma, r, z, t)` and the
//! duals `(a, c, d, f, s)`.
//!
//! Internally `r_b^2` is the BS sum rate in Gbit/s, so `z_b` and the
//! rate-dependent power `P_RD delta(r_b^2)` share units with the power model.
//!
//! Three execution modes are supported:
//! * [`Mode::Centralized`] solves each approximated problem to convergence
//!   before refreshing receivers and the linearization point.
//! * [`Mode::Decentralized`] runs all updates in one loop, one receiver
//!   refresh (over-the-air iteration) per beamformer update.
//! * [`Mode::LowOverhead`] performs several beamformer/dual updates per
//!   receiver refresh.

pub mod netee;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::linalg::{add_outer, hpd_solve, inner, CMatrix, CVector, HermitianEigen, C64};
use crate::metrics::{check_shapes, evaluate, mse_from, received_at, BeamformerSet, Evaluation, Received};
use crate::network::Network;
use crate::power::{delta_prime, delta_unchecked, GBIT_PER_NAT};
use crate::{Error, Result};

/// Cap on `r_b^(n) / r_b` in the `f_b` update; the rate derivative of the
/// square-root form is unbounded as a cell switches off.
const MAX_RATE_RATIO: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Mode {
    Centralized,
    Decentralized,
    /// `updates` beamformer updates per receiver refresh.
    LowOverhead { updates: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Init {
    /// Own-channel directions with equal per-user power `P_b / K_b`.
    Mrt,
    /// Gaussian directions with a random power split meeting `P_b`.
    Random { seed: u64 },
}

/// Lower bound on the SINR used inside the approximated problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinrBound {
    /// `gamma <= 1 + 2 gamma^(n) - eps(w, u) (1 + gamma^(n))^2` with fixed
    /// receivers.
    Mse,
    /// `gamma <= 2 Re(a^(n)* h^H w) / beta^(n) - |a^(n)|^2 beta(w) / beta^(n)^2`,
    /// the quadratic-over-linear bound.
    Qol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Dual step size for `d`.
    pub rho: f64,
    /// Relative objective change over `window` iterations that stops the run.
    pub xi: f64,
    pub window: usize,
    /// Maximum over-the-air (receiver refresh) iterations.
    pub max_iterations: usize,
    /// Stationarity residual that ends an inner solve in centralized mode.
    pub inner_xi: f64,
    pub inner_max_iterations: usize,
    /// Relative bracket width at which the `s_b` bisection stops.
    pub bisection_tol: f64,
    pub bracket_growth: f64,
    pub mode: Mode,
    pub init: Init,
    /// SINR bound used by the approximated problem in centralized mode; the
    /// other modes always use [`SinrBound::Mse`].
    pub bound: SinrBound,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 0.15,
            xi: 1e-4,
            window: 5,
            max_iterations: 100,
            inner_xi: 1e-5,
            inner_max_iterations: 2000,
            bisection_tol: 1e-8,
            bracket_growth: 2.0,
            mode: Mode::Centralized,
            init: Init::Mrt,
            bound: SinrBound::Qol,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.rho) {
            bad.push(format!("rho={} outside [0, 1]", self.rho));
        }
        if self.max_iterations < 1 {
            bad.push("max_iterations must be >= 1".into());
        }
        if self.window < 1 {
            bad.push("window must be >= 1".into());
        }
        if !(self.xi >= 0.0) || !(self.inner_xi >= 0.0) {
            bad.push("tolerances must be nonnegative".into());
        }
        if !(self.bisection_tol > 0.0) || !(self.bracket_growth > 1.0) {
            bad.push("bisection needs a positive tolerance and growth above 1".into());
        }
        if let Mode::LowOverhead { updates } = self.mode {
            if updates < 1 {
                bad.push("low-overhead mode needs at least one update".into());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// `sum_b omega_b R_b / P_b`.
    WeightedSum(Vec<f64>),
    /// `sum_b R_b / sum_b P_b`.
    Network,
}

impl Objective {
    pub fn equal_weights(num_bs: usize) -> Self {
        Objective::WeightedSum(vec![1.0; num_bs])
    }

    /// Value in bit/J.
    pub fn value(&self, eval: &Evaluation) -> f64 {
        match self {
            Objective::WeightedSum(w) => eval.wsum_ee(w),
            Objective::Network => eval.network_ee,
        }
    }
}

/// Linearization point of the current approximated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub gamma: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub p: f64,
    /// `h^H w` of each user at the point.
    #[serde(with = "complex_scalars")]
    pub desired: Vec<C64>,
    /// Interference plus noise of each user at the point.
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    #[serde(with = "crate::scenario::complex_vecs")]
    pub w: Vec<CVector>,
    #[serde(with = "complex_scalars")]
    pub u: Vec<C64>,
    /// Receivers the latest beamformer update was computed with.
    #[serde(with = "complex_scalars")]
    pub u_design: Vec<C64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `sqrt` of the BS sum rate in Gbit/s.
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub t: Vec<f64>,
    pub p: f64,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
    pub s: Vec<f64>,
    pub snapshot: Linearization,
    /// Users with an all-zero serving channel, served with `w_k = 0`.
    pub degenerate: Vec<bool>,
    /// Users whose SINR bound is negative, so `gamma_k` sits at zero and the
    /// bound is inactive.
    pub clamped: Vec<bool>,
    pub iteration: usize,
    pub ota: usize,
    pub backhaul: usize,
    /// Per-BS scalars exchanged for the network-EE coupling.
    pub exchanged: usize,
    /// Beamformer solves that fell back from Cholesky to the eigen path.
    pub fallbacks: usize,
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// bit/J.
    pub objective: f64,
    pub ota: usize,
    pub backhaul: usize,
    pub exchanged: usize,
    pub max_power_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub beamformers: BeamformerSet,
    pub objective: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub state: SolverState,
}

/// The update engine for one network and objective.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    pub net: &'a Network,
    pub objective: Objective,
    pub config: SolverConfig,
    /// Fixed unit directions; when set only the complex amplitude of each
    /// beamformer is optimized.
    pub directions: Option<Vec<CVector>>,
    alpha_g: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub fn new(net: &'a Network, objective: Objective, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        if let Objective::WeightedSum(w) = &objective {
            if w.len() != net.num_bs() {
                return Err(Error::Shape(format!("{} weights for {} BSs", w.len(), net.num_bs())));
            }
            if w.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::Domain("weights must be nonnegative".into()));
            }
        }
        let alpha_g = net.alpha.iter().map(|a| a * GBIT_PER_NAT).collect();
        Ok(Engine { net, objective, config, directions: None, alpha_g })
    }

    pub fn with_directions(mut self, directions: Vec<CVector>) -> Result<Self> {
        if directions.len() != self.net.num_users() {
            return Err(Error::Shape(format!(
                "{} directions for {} users",
                directions.len(),
                self.net.num_users()
            )));
        }
        self.directions = Some(directions);
        Ok(self)
    }

    fn is_network(&self) -> bool {
        matches!(self.objective, Objective::Network)
    }

    fn weight(&self, b: usize) -> f64 {
        match &self.objective {
            Objective::WeightedSum(w) => w[b],
            Objective::Network => 1.0,
        }
    }

    /// Denominator of the linearized ratio for BS `b`: `z_b^(n)` or `p^(n)`.
    fn lin_den(&self, lin: &Linearization, b: usize) -> f64 {
        if self.is_network() {
            lin.p
        } else {
            lin.z[b]
        }
    }

    /// `c_b` implied by the linearization point.
    fn c_from(&self, lin: &Linearization) -> Vec<f64> {
        let nb = self.net.num_bs();
        if self.is_network() {
            let shared: f64 = lin.r.iter().map(|r| (r / lin.p).powi(2)).sum();
            vec![shared; nb]
        } else {
            (0..nb).map(|b| self.weight(b) * (lin.r[b] / lin.z[b]).powi(2)).collect()
        }
    }

    /// True objective of `w` in bit/J.
    pub fn objective_value(&self, w: &BeamformerSet) -> Result<f64> {
        Ok(self.objective.value(&evaluate(self.net, w)?))
    }

    fn initial_beamformers(&self, degenerate: &[bool]) -> Vec<CVector> {
        let ch = &self.net.channels;
        let nk = self.net.num_users();
        let mut w: Vec<CVector> = (0..nk)
            .map(|k| match &self.directions {
                Some(dirs) => dirs[k].clone(),
                None => {
                    let h = ch.own(k);
                    let n = h.norm();
                    if n > 0.0 {
                        h / C64::new(n, 0.0)
                    } else {
                        h.clone()
                    }
                }
            })
            .collect();
        let mut share = vec![1.0; nk];
        if let Init::Random { seed } = self.config.init {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let uni = Uniform::new(0.05, 1.0).expect("valid range");
            for k in 0..nk {
                if self.directions.is_none() {
                    let n = w[k].len();
                    let v = CVector::from_iterator(
                        n,
                        (0..n).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))),
                    );
                    let norm = v.norm();
                    w[k] = v / C64::new(norm, 0.0);
                }
                share[k] = uni.sample(&mut rng);
            }
        }
        for b in 0..self.net.num_bs() {
            let users: Vec<usize> = ch.users_of(b).into_iter().filter(|&k| !degenerate[k]).collect();
            let total: f64 = users.iter().map(|&k| share[k]).sum();
            for &k in &users {
                let p = self.net.budgets[b] * share[k] / total;
                w[k] *= C64::new(p.sqrt(), 0.0);
            }
        }
        for k in 0..nk {
            if degenerate[k] {
                w[k].fill(C64::new(0.0, 0.0));
            }
        }
        w
    }

    /// Feasible starting point with receivers, auxiliaries and duals
    /// consistent with the initial linearization.
    pub fn init_state(&self) -> Result<SolverState> {
        let w = self.initial_beamformers(&self.degenerate_users());
        self.state_at(w)
    }

    fn degenerate_users(&self) -> Vec<bool> {
        let ch = &self.net.channels;
        (0..self.net.num_users())
            .map(|k| match &self.directions {
                Some(dirs) => inner(&dirs[k], ch.own(k)).norm() == 0.0,
                None => ch.own(k).iter().all(|x| *x == C64::new(0.0, 0.0)),
            })
            .collect()
    }

    /// Warm start: the state [`Engine::init_state`] would build around the
    /// given feasible beamformers.
    pub fn state_at(&self, mut w: Vec<CVector>) -> Result<SolverState> {
        let ch = &self.net.channels;
        let nk = self.net.num_users();
        let nb = self.net.num_bs();
        check_shapes(ch, &w)?;
        let slack = BeamformerSet::from_vectors(w.clone(), ch).max_power_slack(&self.net.budgets);
        if slack > 1e-9 {
            return Err(Error::Domain(format!("starting beamformers exceed a power budget by {slack:e} (relative)")));
        }
        let degenerate = self.degenerate_users();
        for k in 0..nk {
            if degenerate[k] {
                w[k].fill(C64::new(0.0, 0.0));
            }
        }
        let mut st = SolverState {
            w,
            u: vec![C64::new(0.0, 0.0); nk],
            u_design: vec![C64::new(0.0, 0.0); nk],
            beta: vec![0.0; nk],
            gamma: vec![0.0; nk],
            r: vec![0.0; nb],
            z: vec![0.0; nb],
            t: vec![0.0; nb],
            p: 0.0,
            a: (0..nb).map(|b| self.weight(b)).collect(),
            c: vec![0.0; nb],
            d: vec![0.0; nk],
            f: vec![0.0; nb],
            s: vec![0.0; nb],
            snapshot: Linearization { gamma: vec![], r: vec![], z: vec![], p: 0.0, desired: vec![], beta: vec![] },
            degenerate,
            clamped: vec![false; nk],
            iteration: 0,
            ota: 0,
            backhaul: 0,
            exchanged: 0,
            fallbacks: 0,
        };
        for k in 0..nk {
            let rec = received_at(k, ch, &st.w, self.net.isolated_cells);
            st.beta[k] = self.net.noise[k] + rec.interference;
        }
        self.refresh_linearization(&mut st);
        st.u_design = st.u.clone();
        st.t = (0..nb).map(|b| st.r[b] * st.r[b] / self.lin_den(&st.snapshot, b)).collect();
        for b in 0..nb {
            st.f[b] = self.f_value(&st, b, st.c[b]);
        }
        for k in 0..nk {
            let b = self.net.serving(k);
            st.d[k] = if st.degenerate[k] { 0.0 } else { st.f[b] * self.alpha_g[b] * (1.0 + st.gamma[k]) };
        }
        if self.config.mode == Mode::Centralized {
            // channel sharing with a central controller, once per solve
            st.backhaul = (0..nb).map(|b| 2 * (nb - 1) * ch.users_of(b).len() * ch.antennas(b)).sum();
        }
        Ok(st)
    }

    /// Sets receivers to MMSE and the linearization point to the exact
    /// SINRs, rates and powers of the current beamformers.
    pub fn refresh_linearization(&self, st: &mut SolverState) {
        let ch = &self.net.channels;
        let nb = self.net.num_bs();
        let nk = self.net.num_users();
        let mut desired = Vec::with_capacity(nk);
        for k in 0..nk {
            let rec = received_at(k, ch, &st.w, self.net.isolated_cells);
            st.u[k] = rec.desired / rec.total(self.net.noise[k]);
            st.gamma[k] = rec.sinr(self.net.noise[k]);
            st.clamped[k] = false;
            st.beta[k] = self.net.noise[k] + rec.interference;
            desired.push(rec.desired);
        }
        self.set_rates_and_powers(st);
        st.snapshot = Linearization {
            gamma: st.gamma.clone(),
            r: st.r.clone(),
            z: st.z.clone(),
            p: st.p,
            desired,
            beta: st.beta.clone(),
        };
        st.c = self.c_from(&st.snapshot);
        st.t = (0..nb).map(|b| self.t_value(st, b)).collect();
    }

    fn set_rates_and_powers(&self, st: &mut SolverState) {
        let nb = self.net.num_bs();
        let mut log_sum = vec![0.0; nb];
        for k in 0..self.net.num_users() {
            log_sum[self.net.serving(k)] += st.gamma[k].ln_1p();
        }
        let radiated = BeamformerSet { w: st.w.clone(), serving: self.net.channels.serving.clone(), num_bs: nb }
            .radiated_per_bs();
        for b in 0..nb {
            let rate = self.alpha_g[b] * log_sum[b];
            st.r[b] = rate.max(0.0).sqrt();
            st.z[b] = radiated[b] / self.net.power.eta
                + self.net.circuit[b]
                + self.net.power.p_rd * delta_unchecked(rate.max(0.0), self.net.power.m);
        }
        st.p = st.z.iter().sum();
    }

    fn t_value(&self, st: &SolverState, b: usize) -> f64 {
        let lin = &st.snapshot;
        let q = lin.r[b] / self.lin_den(lin, b);
        let z = if self.is_network() { st.p } else { st.z[b] };
        2.0 * q * st.r[b] - q * q * z
    }

    /// `f_b` from stationarity in `r_b`, using `c` for the rate-power price.
    fn f_value(&self, st: &SolverState, b: usize, c: f64) -> f64 {
        let lin = &st.snapshot;
        let r = st.r[b];
        if r == 0.0 && lin.r[b] == 0.0 {
            // no rate left in the cell: hold the previous price
            return st.f[b];
        }
        let ratio = (lin.r[b] / r).min(MAX_RATE_RATIO);
        let slope = self.weight(b) * ratio / self.lin_den(lin, b);
        // d/dr of P_RD delta(r^2) is 2 r P_RD delta'(r^2)
        let price = c * self.net.power.p_rd * delta_prime(r * r, self.net.power.m);
        (slope - price).max(0.0)
    }

    /// Value of the approximated objective `sum_b a_b t_b`.
    pub fn surrogate(&self, st: &SolverState) -> f64 {
        st.t.iter().zip(&st.a).map(|(t, a)| t * a).sum()
    }

    fn bs_matrix(&self, st: &SolverState, b: usize) -> CMatrix {
        let n = self.net.channels.antennas(b);
        let mut m = CMatrix::zeros(n, n);
        for j in 0..self.net.num_users() {
            if !self.net.couples(b, j) || st.d[j] == 0.0 {
                continue;
            }
            add_outer(&mut m, &self.net.channels.h[b][j], st.d[j] * st.u[j].norm_sqr());
        }
        m
    }

    /// Smallest `s >= 0` with `sum_i a_i / (lambda_i + s)^2 <= budget`.
    fn power_dual(&self, terms: &[(f64, f64)], budget: f64) -> f64 {
        let power = |s: f64| -> f64 {
            terms
                .iter()
                .map(|&(a, l)| if a == 0.0 { 0.0 } else { a / (l.max(0.0) + s).powi(2) })
                .sum()
        };
        if power(0.0) <= budget {
            return 0.0;
        }
        if budget <= 0.0 {
            return f64::INFINITY;
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while power(hi) > budget {
            lo = hi;
            hi *= self.config.bracket_growth;
        }
        while hi - lo > self.config.bisection_tol * hi {
            let mid = 0.5 * (lo + hi);
            if power(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// `w_k = d_k u_k (sum_j d_j |u_j|^2 h_{b,j} h_{b,j}^H + (s_b + c_b / eta) I)^{-1} h_{b,k}`
    /// with `s_b` bisected to meet the power budget.
    pub fn update_beamformers(&self, st: &mut SolverState) -> Result<()> {
        let ch = &self.net.channels;
        let eta = self.net.power.eta;
        for b in 0..self.net.num_bs() {
            let users: Vec<usize> = ch.users_of(b).into_iter().filter(|&k| !st.degenerate[k]).collect();
            if users.is_empty() {
                st.s[b] = 0.0;
                continue;
            }
            let budget = self.net.budgets[b];
            let shift = st.c[b] / eta;
            let qol = self.qol_active();
            let mut m = self.bs_matrix(st, b);
            match &self.directions {
                Some(dirs) => {
                    let mut terms = Vec::with_capacity(users.len());
                    let mut nums = Vec::with_capacity(users.len());
                    for &k in &users {
                        let v = &dirs[k];
                        let mut den = shift;
                        for j in 0..self.net.num_users() {
                            if self.net.couples(b, j) && st.d[j] != 0.0 && !(qol && j == k) {
                                den += st.d[j] * st.u[j].norm_sqr() * inner(&ch.h[b][j], v).norm_sqr();
                            }
                        }
                        let num = st.u[k] * inner(v, &ch.h[b][k]) * (st.d[k] * self.rhs_scale(st, k));
                        terms.push((num.norm_sqr(), den));
                        nums.push((num, den));
                    }
                    let s = self.power_dual(&terms, budget);
                    st.s[b] = s;
                    for (i, &k) in users.iter().enumerate() {
                        let (num, den) = nums[i];
                        let x = if num.norm_sqr() == 0.0 { C64::new(0.0, 0.0) } else { num / (den + s) };
                        st.w[k] = &dirs[k] * x;
                    }
                }
                None => {
                    for i in 0..m.nrows() {
                        m[(i, i)] += C64::new(shift, 0.0);
                    }
                    let rhs: Vec<CVector> = users
                        .iter()
                        .map(|&k| &ch.h[b][k] * (st.u[k] * st.d[k] * self.rhs_scale(st, k)))
                        .collect();
                    let mats: Vec<CMatrix> = if qol {
                        users
                            .iter()
                            .map(|&k| {
                                let mut mk = m.clone();
                                add_outer(&mut mk, &ch.h[b][k], -st.d[k] * st.u[k].norm_sqr());
                                mk
                            })
                            .collect()
                    } else {
                        vec![m]
                    };
                    let eigs: Vec<HermitianEigen> = mats.iter().map(HermitianEigen::new).collect();
                    let pick = |i: usize| if qol { i } else { 0 };
                    let mut terms = Vec::new();
                    for (i, v) in rhs.iter().enumerate() {
                        let eig = &eigs[pick(i)];
                        let y = eig.project(v);
                        for (yi, &l) in y.iter().zip(&eig.values) {
                            terms.push((yi.norm_sqr(), l));
                        }
                    }
                    let s = self.power_dual(&terms, budget);
                    st.s[b] = s;
                    for (i, &k) in users.iter().enumerate() {
                        let direct = if s == 0.0 {
                            hpd_solve(&mats[pick(i)], std::slice::from_ref(&rhs[i])).map(|mut x| x.remove(0))
                        } else {
                            None
                        };
                        st.w[k] = match direct {
                            Some(x) => x,
                            None => {
                                if s == 0.0 {
                                    st.fallbacks += 1;
                                }
                                eigs[pick(i)].shifted_solve(&rhs[i], s, 0.0)
                            }
                        };
                    }
                }
            }
        }
        st.u_design.clone_from(&st.u);
        Ok(())
    }

    /// MMSE receivers for the current beamformers; one over-the-air round.
    pub fn update_receivers(&self, st: &mut SolverState) {
        for k in 0..self.net.num_users() {
            let rec = received_at(k, &self.net.channels, &st.w, self.net.isolated_cells);
            st.u[k] = rec.desired / rec.total(self.net.noise[k]);
        }
        st.ota += 1;
    }

    /// `gamma`, `r`, `z`, `p` and `t` from the current `w`, `u` and snapshot.
    pub fn update_locals(&self, st: &mut SolverState) {
        let ch = &self.net.channels;
        for k in 0..self.net.num_users() {
            let rec = received_at(k, ch, &st.w, self.net.isolated_cells);
            st.beta[k] = self.net.noise[k] + rec.interference;
            let bound = self.sinr_bound(st, k, &rec);
            st.clamped[k] = bound < 0.0;
            st.gamma[k] = bound.max(0.0);
        }
        self.set_rates_and_powers(st);
        st.t = (0..self.net.num_bs()).map(|b| self.t_value(st, b)).collect();
    }

    /// `f`, `d` (damped by `rho`) and `c`.
    pub fn update_duals(&self, st: &mut SolverState) {
        self.set_duals(st, self.config.rho);
    }

    fn set_duals(&self, st: &mut SolverState, rho: f64) {
        let nb = self.net.num_bs();
        let c_new = self.c_from(&st.snapshot);
        for b in 0..nb {
            st.f[b] = self.f_value(st, b, c_new[b]);
        }
        for k in 0..self.net.num_users() {
            if st.degenerate[k] {
                st.d[k] = 0.0;
                continue;
            }
            if st.clamped[k] {
                st.d[k] *= 1.0 - rho;
                continue;
            }
            let b = self.net.serving(k);
            let g0 = st.snapshot.gamma[k];
            let target = st.f[b] * self.alpha_g[b] * (1.0 + g0).powi(2) / (1.0 + st.gamma[k]);
            st.d[k] += rho * (target - st.d[k]);
        }
        st.c = c_new;
    }

    fn qol_active(&self) -> bool {
        self.config.bound == SinrBound::Qol && self.config.mode == Mode::Centralized
    }

    /// Factor on `d_k u_k h` in the beamformer update.
    fn rhs_scale(&self, st: &SolverState, k: usize) -> f64 {
        if self.qol_active() {
            1.0 / (1.0 + st.snapshot.gamma[k])
        } else {
            1.0
        }
    }

    /// Right side of the linearized SINR constraint of user `k`, before the
    /// clamp at zero.
    fn sinr_bound(&self, st: &SolverState, k: usize, rec: &Received) -> f64 {
        let lin = &st.snapshot;
        let g0 = lin.gamma[k];
        if self.qol_active() {
            let b0 = lin.beta[k];
            let beta = self.net.noise[k] + rec.interference;
            2.0 * (lin.desired[k].conj() * rec.desired).re / b0 - lin.desired[k].norm_sqr() / (b0 * b0) * beta
        } else {
            let eps = mse_from(rec, st.u[k], self.net.noise[k]);
            -eps * (1.0 + g0).powi(2) + (1.0 + 2.0 * g0)
        }
    }

    /// `sum_k d_k (gamma-bound_k(w)) / (1 + gamma_k^(n))^2 - sum_b c_b ||w_b||^2 / eta`,
    /// up to a constant the function the beamformer update maximizes.
    fn lagrangian_part(&self, st: &SolverState, w: &[CVector]) -> f64 {
        let ch = &self.net.channels;
        let mut value = 0.0;
        for k in 0..self.net.num_users() {
            if st.d[k] != 0.0 {
                let rec = received_at(k, ch, w, self.net.isolated_cells);
                value += st.d[k] * self.sinr_bound(st, k, &rec) / (1.0 + st.snapshot.gamma[k]).powi(2);
            }
            value -= st.c[self.net.serving(k)] * w[k].norm_squared() / self.net.power.eta;
        }
        value
    }

    fn advance_snapshot(&self, st: &mut SolverState) {
        st.snapshot.gamma.clone_from(&st.gamma);
        st.snapshot.r.clone_from(&st.r);
        st.snapshot.z.clone_from(&st.z);
        st.snapshot.p = st.p;
    }

    fn count_exchange(&self, st: &mut SolverState) {
        st.backhaul += self.net.num_users();
        if self.is_network() {
            st.exchanged += 2 * self.net.num_bs();
        }
    }

    /// Solves the approximated problem for the current receivers and
    /// linearization point. Each step sets the duals to the gradient of the
    /// approximated objective, computes the beamformer update and moves
    /// towards it with a backtracked step that must raise the approximated
    /// objective. Returns the number of steps.
    pub fn solve_inner(&self, st: &mut SolverState) -> Result<usize> {
        const ARMIJO: f64 = 1e-4;
        const MAX_HALVINGS: usize = 40;
        self.update_locals(st);
        let mut n = 0;
        let mut moved = false;
        while n < self.config.inner_max_iterations {
            n += 1;
            moved = false;
            let s0 = self.surrogate(st);
            self.set_duals(st, 1.0);
            let w_old = st.w.clone();
            let l_old = self.lagrangian_part(st, &w_old);
            self.update_beamformers(st)?;
            let target = std::mem::replace(&mut st.w, w_old.clone());
            let gain = self.lagrangian_part(st, &target) - l_old;
            if self.stationarity_residual(st) <= self.config.inner_xi || !(gain > 1e-12 * s0.abs()) {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                for k in 0..st.w.len() {
                    st.w[k] = &w_old[k] + (&target[k] - &w_old[k]) * C64::new(step, 0.0);
                }
                self.update_locals(st);
                if self.surrogate(st) >= s0 + ARMIJO * step * gain {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                st.w = w_old;
                self.update_locals(st);
                break;
            }
            moved = true;
        }
        if moved {
            // duals and s_b of the final point, beamformers unchanged
            let w_final = st.w.clone();
            self.set_duals(st, 1.0);
            self.update_beamformers(st)?;
            st.w = w_final;
        }
        Ok(n)
    }

    fn beamformer_set(&self, st: &SolverState) -> BeamformerSet {
        BeamformerSet::from_vectors(st.w.clone(), &self.net.channels)
    }

    fn record(&self, st: &SolverState, objective: f64, trace: &mut Vec<TraceRow>) {
        trace.push(TraceRow {
            iteration: st.iteration,
            objective,
            ota: st.ota,
            backhaul: st.backhaul,
            exchanged: st.exchanged,
            max_power_slack: self.beamformer_set(st).max_power_slack(&self.net.budgets),
        });
    }

    fn stalled(&self, trace: &[TraceRow]) -> bool {
        let n = trace.len();
        let win = self.config.window;
        if n <= win {
            return false;
        }
        let now = trace[n - 1].objective;
        let then = trace[n - 1 - win].objective;
        (now - then).abs() <= self.config.xi * now.abs().max(f64::MIN_POSITIVE)
    }

    /// Runs the configured mode from `init_state` until the objective changes
    /// by less than `xi` (relative) over `window` iterations or the
    /// iteration budget is spent.
    pub fn run(&self) -> Result<SolveOutcome> {
        let st = self.init_state()?;
        self.run_from(st)
    }

    pub fn run_from(&self, mut st: SolverState) -> Result<SolveOutcome> {
        let mut trace = Vec::new();
        let mut best = self.objective_value(&self.beamformer_set(&st))?;
        self.record(&st, best, &mut trace);
        let mut converged = false;
        while st.iteration < self.config.max_iterations {
            st.iteration += 1;
            match self.config.mode {
                Mode::Centralized => {
                    if st.iteration > 1 {
                        self.refresh_linearization(&mut st);
                    }
                    st.ota += 1;
                    self.solve_inner(&mut st)?;
                }
                Mode::Decentralized | Mode::LowOverhead { .. } => {
                    let updates = match self.config.mode {
                        Mode::LowOverhead { updates } => updates,
                        _ => 1,
                    };
                    for j in 0..updates {
                        self.update_beamformers(&mut st)?;
                        if j + 1 == updates {
                            self.update_receivers(&mut st);
                        }
                        self.update_locals(&mut st);
                        self.update_duals(&mut st);
                        self.count_exchange(&mut st);
                    }
                    self.advance_snapshot(&mut st);
                }
            }
            let value = self.objective_value(&self.beamformer_set(&st))?;
            if !value.is_finite() {
                return Err(Error::Diverged {
                    iteration: st.iteration,
                    detail: format!("objective {value}; max d {:e}", st.d.iter().fold(0.0f64, |m, x| m.max(*x))),
                });
            }
            best = value;
            self.record(&st, value, &mut trace);
            if self.stalled(&trace) {
                converged = true;
                break;
            }
        }
        Ok(SolveOutcome { beamformers: self.beamformer_set(&st), objective: best, trace, converged, state: st })
    }

    /// Largest relative KKT residual of the beamformer stationarity condition,
    /// `||(sum_j d_j |u_j|^2 h h^H + (s_b + c_b / eta) I) w_k - d_k u_k h_{b_k,k}||`,
    /// normalized by `||h_{b_k,k}|| max_j |d_j u_j|`, evaluated with the
    /// receivers the beamformers were designed for. With the
    /// quadratic-over-linear bound the own term is left out of the matrix and
    /// the right side carries `1 / (1 + gamma_k^(n))`.
    pub fn stationarity_residual(&self, st: &SolverState) -> f64 {
        let ch = &self.net.channels;
        let qol = self.qol_active();
        let scale_du = (0..self.net.num_users())
            .map(|j| st.d[j] * st.u_design[j].norm() * self.rhs_scale(st, j))
            .fold(0.0f64, f64::max);
        if scale_du == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for b in 0..self.net.num_bs() {
            let n = ch.antennas(b);
            let mut m = CMatrix::zeros(n, n);
            for j in 0..self.net.num_users() {
                if self.net.couples(b, j) {
                    add_outer(&mut m, &ch.h[b][j], st.d[j] * st.u_design[j].norm_sqr());
                }
            }
            let shift = st.s[b] + st.c[b] / self.net.power.eta;
            for k in ch.users_of(b) {
                if st.degenerate[k] {
                    continue;
                }
                let h = &ch.h[b][k];
                let mut mk = m.clone();
                if qol {
                    add_outer(&mut mk, h, -st.d[k] * st.u_design[k].norm_sqr());
                }
                let target = st.u_design[k] * (st.d[k] * self.rhs_scale(st, k));
                let grad = match &self.directions {
                    Some(dirs) => {
                        // derivative along the fixed direction only
                        let v = &dirs[k];
                        let lhs = inner(v, &(&mk * &st.w[k])) + inner(v, &st.w[k]) * shift;
                        CVector::from_element(1, lhs - inner(v, h) * target)
                    }
                    None => &mk * &st.w[k] + &st.w[k] * C64::new(shift, 0.0) - h * target,
                };
                let hn = h.norm();
                if hn > 0.0 {
                    worst = worst.max(grad.norm() / (hn * scale_du));
                }
            }
        }
        worst
    }

    /// Largest `s_b |P_b - sum ||w_k||^2| / P_b` over BSs.
    pub fn complementary_slackness(&self, st: &SolverState) -> f64 {
        let radiated = self.beamformer_set(st).radiated_per_bs();
        (0..self.net.num_bs())
            .map(|b| {
                let pb = self.net.budgets[b];
                if pb > 0.0 {
                    st.s[b] * (pb - radiated[b]).abs() / pb
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Convenience wrapper: weighted-sum EE with the given weights.
pub fn run_wsum(net: &Network, weights: &[f64], config: &SolverConfig) -> Result<SolveOutcome> {
    Engine::new(net, Objective::WeightedSum(weights.to_vec()), config.clone())?.run()
}

pub(crate) mod complex_scalars {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(u: &[C64], s: S) -> Result<S::Ok, S::Error> {
        u.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?.into_iter().map(|p| C64::new(p[0], p[1])).collect())
    }
}
