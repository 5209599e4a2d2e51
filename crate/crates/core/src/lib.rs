//! Finite-blocklength covert-communication benchmarks for quasi-static MIMO
//! fading channels.

pub mod bounds;
pub mod channels;
pub mod cli;
pub mod config;
pub mod covertness;
pub mod error;
pub mod linalg;
pub mod linksim;
pub mod montecarlo;

pub use error::{Error, Result};
