//! Monte Carlo simulator and feasibility planner for a two-photon
//! polarization-correlation experiment in which one beam splitter moves.
//!
//! Two predictions are modelled: the standard entangled one, which ignores
//! impact timing, and a timing-dependent alternative in which an impact that
//! precedes its partner in its own splitter's rest frame produces values
//! from local information only.
//!
//! - [`relativity`]: frame-local ordering and before / non-before classes
//! - [`correlations`]: closed-form joint distributions and the state-vector check
//! - [`simulation`]: seeded per-trial Monte Carlo
//! - [`statistics`]: correlation estimates, CHSH
//! - [`feasibility`]: velocity / distance / delay bounds
//! - [`config`], [`manifest`], [`cli`]: files and the command line

pub mod cli;
pub mod config;
pub mod correlations;
pub mod error;
pub mod feasibility;
pub mod manifest;
pub mod relativity;
pub mod simulation;
pub mod statistics;

pub use error::{Error, Result};
