//! Experiment runner for the `mfc-core` vehicle control laboratory.

pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod validate;
