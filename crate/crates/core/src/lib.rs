//! Cascade stability of cellular load balancing.
//!
//! A network of base-station cells runs heterogeneous load-balancing
//! policies: each cell has a self-load law `dl_i/dt = f_i(l_i)`, each linked
//! pair an offloading law `g_ij(l_i, l_j)`, and sleep-capable cells switch
//! behaviour below a load threshold. This crate answers whether the network
//! synchronizes to the fully-loaded state `l_i = 1` and stays there under
//! perturbation, twice over:
//!
//! - analytically, by linearizing about the synchronized state and
//!   examining the Laplacian eigenmodes (homogeneous networks) or the
//!   variational matrices and a Lyapunov-style check (heterogeneous ones),
//! - empirically, by integrating the full nonlinear system and measuring
//!   convergence.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (f32 or f64); the
//! `*64` aliases below pick the default precision.

pub mod linalg;
pub mod policy;
pub mod poly;
pub mod radio;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod stability;
pub mod topology;

pub use scalar::Scalar;

/// Default-precision aliases for the main entry types.
pub type LocalPolicy64 = policy::LocalPolicy<f64>;
pub type CouplingPolicy64 = policy::CouplingPolicy<f64>;
pub type PolicyAssignment64 = policy::PolicyAssignment<f64>;
pub type Topology64 = topology::NetworkTopology<f64>;
pub type SpectralSummary64 = topology::SpectralSummary<f64>;
pub type StabilityReport64 = stability::StabilityReport<f64>;
pub type SimulationConfig64 = simulate::SimulationConfig<f64>;
pub type Trajectory64 = simulate::Trajectory<f64>;
pub type SyncMetrics64 = simulate::SyncMetrics<f64>;
pub type RadioConfig64 = radio::RadioConfig<f64>;
pub type CellLoadSnapshot64 = radio::CellLoadSnapshot<f64>;
