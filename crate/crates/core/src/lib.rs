//! Optimistic planning and regret-minimizing agents for tabular,
//! weakly communicating MDPs.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs (and of an explicit random source where sampling is
//! involved); file formats, the command line and the experiment harness live
//! in the `regal-lab` companion crate.
//!
//! Module map:
//!
//! - [`mdp`]: the tabular model, Bellman operator, gain/bias solver, span and
//!   the aperiodicity transform.
//! - [`diameters`]: hitting times, the diameter family and the
//!   span-versus-travel-time checker.
//! - [`confidence`]: visit counts, empirical transitions and L1 confidence sets.
//! - [`planner`]: extended value iteration plus its span-constrained and
//!   span-regularized variants.
//! - [`agents`]: the episodic learning loops and their logs.
//! - [`envs`]: benchmark MDP constructors.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agents;
pub mod confidence;
pub mod diameters;
pub mod envs;
mod error;
mod linalg;
pub mod mdp;
pub mod planner;

pub use error::Error;
pub use mdp::{GainBias, Mdp, Policy};

pub type Result<T, E = Error> = core::result::Result<T, E>;
