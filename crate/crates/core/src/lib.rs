//! Dual labor market reputation model.
//!
//! Workers invest in human capital before entering a temporary labor market
//! (TLM), move on to a permanent labor market (PLM) where firms hire on
//! individual reputation, and collectively shape their group's reputation,
//! which in turn feeds back into the investment costs of the next cohort.
//!
//! The crate provides:
//!
//! - [`params`], [`forms`]: parameters, functional forms and validation.
//! - [`tlm`]: investment thresholds under statistical parity, group-blind
//!   and statistical-discrimination hiring.
//! - [`plm`]: effort cutoffs, reputation-threshold contracts, the forgiveness
//!   schedule and the worker's finite-horizon dynamic program.
//! - [`dynamics`]: the deterministic group-level recursion.
//! - [`equilibrium`]: steady states, contraction diagnostics and regime
//!   comparison.
//! - [`abm`]: a seeded agent-level simulation of the same market.
//! - [`config`], [`cli`]: scenario files and the command-line runner.

pub mod abm;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod forms;
pub mod params;
pub mod plm;
pub mod root;
pub mod tlm;

pub use config::Scenario;
pub use error::{Error, Result};
pub use forms::FunctionalForms;
pub use params::{Group, Model, ModelParams};
pub use tlm::{HiringRegime, ThresholdSet};
