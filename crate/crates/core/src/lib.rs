//! Simulation and policy synthesis for resource-sharing networks in heavy traffic.
//!
//! A resource-sharing network has `J` job classes served simultaneously by
//! subsets of `I` resources (incidence matrix `K`). This crate builds the
//! threshold control policy for such networks, simulates the controlled
//! queueing process at a finite traffic parameter `r`, and estimates how
//! close its discounted and ergodic holding costs come to the Hierarchical
//! Greedy Ideal (HGI) benchmark computed from a reflected Brownian motion.
//!
//! Pipeline:
//!
//! 1. [`model`] — network description and heavy-traffic parameter checks.
//! 2. [`kernel`] — offline policy synthesis: kernel basis of `K`, the
//!    configuration set `M`, and the adjustment vector tables.
//! 3. [`cost`] — LP evaluators for the minimal holding cost `hhat(w)` and
//!    the optimality gap `dtilde(q)`.
//! 4. [`simengine`] — event-driven simulation of the controlled network.
//! 5. [`estimators`] — diffusion-scaled views and cost functionals.
//! 6. [`rbm`] — Skorokhod map, reflected Brownian motion, HGI estimates.
//! 7. [`experiment`] — replication fan-out, result tables, persistence.

// index loops here usually walk several parallel arrays at once
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod cost;
pub mod estimators;
pub mod experiment;
pub mod fixtures;
pub mod kernel;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod plots;
pub mod rbm;
pub mod rng;
pub mod simengine;

pub use cost::CostOracle;
pub use kernel::{synthesize, KernelBasis, PolicyTables};
pub use model::{NetworkSpec, TrafficInstance, ValidationReport};
pub use simengine::{SimConfig, Trajectory};
