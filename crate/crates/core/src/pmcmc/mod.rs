//! Particle marginal Metropolis-Hastings with an adaptive proposal.

pub mod adaptive;
pub mod chain;
pub mod prior;

pub use adaptive::{adaptive_propose, AdaptiveState, Proposal};
pub use chain::{
    accept, pmcmc_iteration, run_chain, ChainConfig, ChainDiagnostics, ChainOutput, ChainRecord,
    ChainState, IterationCounters,
};
pub use prior::{log_prior, sample_prior, ObsVarPrior, ParamPrior, ParameterLayout, PriorSpec};
