//! Deep active inference for energy-aware workstation control.
//!
//! The crate has three layers:
//!
//! * [`sim`] — an event-driven stochastic simulator of a parallel-machine
//!   workstation with exact energy accounting and sliding-window KPIs;
//! * [`nn`] — a small reverse-mode autodiff core (tape, MLPs, distribution
//!   quantities, Adam) with no external numerics dependencies;
//! * [`model`], [`free_energy`], [`agent`] — the four-network generative
//!   model, the variational/expected free-energy objectives, and the
//!   alternating model-learning / policy-optimization training loop with
//!   replay memory, planning-time fine-tuning, and evaluation protocols.
//!
//! [`io`] holds the flat config format, binary checkpoints, and CSV logs
//! shared with the CLI.

pub mod agent;
pub mod error;
pub mod free_energy;
pub mod io;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
