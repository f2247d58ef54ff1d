//! Falsification-driven training and evaluation for two-vessel encounters.

pub mod cmaes;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod falsification;
pub mod harness;
pub mod rules;
pub mod signal;
pub mod stl;
pub mod train;
