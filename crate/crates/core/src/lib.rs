//! Four-factor commodity futures model with stochastic volatility and
//! monthly seasonality, calibrated by particle marginal Metropolis-Hastings
//! with a Rao-Blackwellised particle filter.

pub mod analytics;
pub mod cli;
pub mod config;
pub mod error;
pub mod filter;
pub mod model;
pub mod panel;
pub mod pmcmc;
pub mod results;
pub mod sde;

pub use error::{Error, Result};
