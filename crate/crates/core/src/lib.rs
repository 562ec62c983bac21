//! Large-deviation optimal trajectories for ergodic Jackson networks.
//!
//! The most probable way for the scaled queue-length process to reach a
//! target `r` is the time reversal of the fluid path of the dual (time
//! reversed) network started at `r`. This crate builds the network model,
//! the per-node and per-face momenta, the dual fluid solver and a
//! Monte Carlo simulator used to check the asymptotics.

// Index loops mirror the matrix notation throughout.
#![allow(clippy::needless_range_loop)]

pub mod checks;
pub mod error;
pub mod export;
pub mod face;
pub mod fluid;
pub mod hamiltonian;
pub mod linalg;
pub mod matident;
pub mod momenta;
pub mod netmodel;
pub mod sampling;
pub mod simulate;

pub use error::{Error, Result};
pub use face::FaceLabel;
pub use linalg::Matrix;
pub use netmodel::{build_dual, solve_traffic, DualNetwork, Network, TrafficSolution, ValidatedNetwork};
pub use fluid::{FluidSegment, FluidTrajectory, OptimalPath, PathSegment};
pub use momenta::{FaceMomenta, MomentaTable, NodeMomentum};
pub use simulate::{SimConfig, SimResult};
