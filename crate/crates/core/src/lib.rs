//! Energy-efficient coordinated beamforming for multi-cell multi-user MISO
//! downlink with rate-dependent processing power.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] draws the 7-cell wrap-around network, path gains, Rayleigh
//!   channels and pilot-contaminated channel observations.
//! * [`power`] is the power-consumption model (circuit, linear processing,
//!   per-iteration computation and rate-dependent terms).
//! * [`metrics`] evaluates SINR, rates, MSE, MMSE receivers and both
//!   energy-efficiency objectives on a [`network::Network`].
//! * [`approx`] holds the tangent lower bounds used by the SCA updates.
//! * [`solver`] is the closed-form KKT update engine for weighted-sum EE and
//!   network EE in centralized, decentralized and low-overhead modes.
//! * [`pilots`] groups users onto pilot resources.
//! * [`baselines`] implements the conventional comparison schemes.
//! * [`harness`] runs seeded sweeps and writes CSV/JSON results.

pub mod approx;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod pilots;
pub mod power;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use metrics::BeamformerSet;
pub use network::Network;
