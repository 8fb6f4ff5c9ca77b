//! File formats, experiment harness, plotting and the `regal` command line
//! for [`regal_core`].

pub mod cli;
pub mod config;
pub mod experiment;
pub mod format;
pub mod plot;
pub mod validate;
