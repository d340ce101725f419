//! Formulaic alpha mining and dynamic factor combination.

pub mod backtest;
pub mod cli;
pub mod combiner;
pub mod dataset;
pub mod dsl;
pub mod eval;
pub mod metrics;
pub mod miner;
pub mod nn;
pub mod rng;
pub mod zoo;
