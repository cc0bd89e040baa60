//! Chain orchestration. The stored likelihood estimate of the current state
//! is never recomputed, which keeps the chain exact for the posterior.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adaptive::{adaptive_propose, AdaptiveState};
use super::prior::{log_prior, ParameterLayout, PriorSpec};
use crate::error::{Error, Result};
use crate::filter::{rb_sir_filter, FilterConfig};
use crate::model::ModelParams;
use crate::panel::FuturesPanel;
use crate::sde::LatentPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    pub n_particles: usize,
    /// Weight of the adaptive mixture component.
    pub w1: f64,
    pub seed: u64,
    pub filter: FilterConfig,
    /// Store the sampled latent path with each retained record.
    pub keep_trajectories: bool,
    /// Spacing of the running-acceptance and trace extracts in diagnostics.
    pub trace_every: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 1,
            n_particles: 200,
            w1: 0.95,
            seed: 0,
            filter: FilterConfig::default(),
            keep_trajectories: true,
            trace_every: 100,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 || self.n_particles == 0 || self.trace_every == 0 {
            return Err(Error::Config("thin, n_particles and trace_every must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.w1) {
            return Err(Error::Config(format!("w1 must lie in [0, 1], got {}", self.w1)));
        }
        if !(self.filter.ess_threshold >= 0.0 && self.filter.ess_threshold <= 1.0) {
            return Err(Error::Config("ess_threshold must lie in [0, 1]".into()));
        }
        self.filter.disc.validate()
    }
}

/// The current state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub phi: ModelParams,
    /// Sampler coordinates of `phi`.
    pub u: Vec<f64>,
    pub trajectory: LatentPath,
    pub log_lik_hat: f64,
    pub log_prior: f64,
    pub log_jacobian: f64,
}

impl ChainState {
    fn log_target(&self) -> f64 {
        self.log_lik_hat + self.log_prior + self.log_jacobian
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub iteration: usize,
    pub phi: ModelParams,
    /// Empty unless trajectories are kept.
    pub trajectory: LatentPath,
    pub log_lik_hat: f64,
    pub log_prior: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IterationCounters {
    pub proposals: usize,
    pub accepted: usize,
    pub out_of_support: usize,
    pub filter_failures: usize,
    pub adaptive_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptancePoint {
    pub iteration: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSnapshot {
    pub iteration: usize,
    pub count: usize,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub acceptance_rate_post_burn_in: f64,
    pub counters: IterationCounters,
    pub running_acceptance: Vec<AcceptancePoint>,
    /// Names of the sampler coordinates, in the order of `trace` values.
    pub sampled_names: Vec<String>,
    pub trace: Vec<TracePoint>,
    pub adaptive_snapshots: Vec<AdaptiveSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub records: Vec<ChainRecord>,
    pub diagnostics: ChainDiagnostics,
}

/// Metropolis decision on log targets with uniform `u`.
pub fn accept(log_target_new: f64, log_target_old: f64, u: f64) -> bool {
    let log_ratio = log_target_new - log_target_old;
    !log_ratio.is_nan() && (log_ratio >= 0.0 || u.ln() < log_ratio)
}

/// One proposal and accept/reject step. Returns whether the proposal was
/// accepted. The adaptive state is always updated with the post-decision
/// state.
#[allow(clippy::too_many_arguments)]
pub fn pmcmc_iteration<R: Rng + ?Sized>(
    state: &mut ChainState,
    panel: &FuturesPanel,
    prior: &PriorSpec,
    layout: &ParameterLayout,
    ad: &mut AdaptiveState,
    cfg: &ChainConfig,
    rng: &mut R,
    counters: &mut IterationCounters,
) -> Result<bool> {
    let prop = adaptive_propose(&state.u, ad, cfg.w1, rng);
    counters.proposals += 1;
    counters.adaptive_draws += prop.adaptive as usize;

    let phi = layout.decode(&prop.x, &state.phi)?;
    let lp = match (phi.real.validate(), log_prior(&phi, prior)) {
        (Ok(()), Some(lp)) => Some(lp),
        _ => None,
    };
    let mut accepted = false;
    match lp {
        None => counters.out_of_support += 1,
        Some(lp) => {
            let seed = rng.next_u64();
            match rb_sir_filter(&phi, panel, cfg.n_particles, &cfg.filter, seed) {
                Ok(res) => {
                    let candidate = ChainState {
                        log_jacobian: layout.log_jacobian(&prop.x),
                        u: prop.x,
                        phi,
                        trajectory: res.sampled_trajectory,
                        log_lik_hat: res.log_marginal_likelihood,
                        log_prior: lp,
                    };
                    let u = rng.random::<f64>();
                    if accept(candidate.log_target(), state.log_target(), u) {
                        *state = candidate;
                        accepted = true;
                        counters.accepted += 1;
                    }
                }
                Err(e) if e.is_numerical() => counters.filter_failures += 1,
                Err(e) => return Err(e),
            }
        }
    }
    ad.update(&state.u);
    Ok(accepted)
}

/// Runs the chain from `init`. Fails if `init` is outside the prior
/// support or its filter run collapses.
pub fn run_chain(
    panel: &FuturesPanel,
    prior: &PriorSpec,
    init: &ModelParams,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    cfg.validate()?;
    prior.validate()?;
    init.real.validate()?;
    let layout = ParameterLayout::new(prior, init.n_contracts());
    let u0 = layout.encode(init)?;
    let lp0 = log_prior(init, prior).ok_or_else(|| {
        Error::InvalidParameter("initial parameters lie outside the prior support".into())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let res = rb_sir_filter(init, panel, cfg.n_particles, &cfg.filter, rng.next_u64())?;
    let mut state = ChainState {
        phi: init.clone(),
        log_jacobian: layout.log_jacobian(&u0),
        u: u0.clone(),
        trajectory: res.sampled_trajectory,
        log_lik_hat: res.log_marginal_likelihood,
        log_prior: lp0,
    };
    let mut ad = AdaptiveState::new(&u0);
    let mut counters = IterationCounters::default();
    let mut burn_in_accepted = 0;
    let snapshot_every = (cfg.iterations / 10).max(1);

    let mut records = Vec::new();
    let mut running = Vec::new();
    let mut trace = Vec::new();
    let mut snapshots = Vec::new();
    for it in 0..cfg.iterations {
        let accepted = pmcmc_iteration(
            &mut state, panel, prior, &layout, &mut ad, cfg, &mut rng, &mut counters,
        )?;
        if it + 1 == cfg.burn_in {
            burn_in_accepted = counters.accepted;
        }
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            records.push(ChainRecord {
                iteration: it,
                phi: state.phi.clone(),
                trajectory: if cfg.keep_trajectories {
                    state.trajectory.clone()
                } else {
                    LatentPath::default()
                },
                log_lik_hat: state.log_lik_hat,
                log_prior: state.log_prior,
                accepted,
            });
        }
        if (it + 1) % cfg.trace_every == 0 {
            running.push(AcceptancePoint {
                iteration: it + 1,
                rate: counters.accepted as f64 / counters.proposals as f64,
            });
            trace.push(TracePoint {
                iteration: it + 1,
                values: state.u.clone(),
            });
        }
        if (it + 1) % snapshot_every == 0 {
            snapshots.push(AdaptiveSnapshot {
                iteration: it + 1,
                count: ad.count,
                mean: ad.mu.as_slice().to_vec(),
                covariance: ad.sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
            });
        }
    }

    let post = cfg.iterations - cfg.burn_in;
    let diagnostics = ChainDiagnostics {
        acceptance_rate: counters.accepted as f64 / counters.proposals as f64,
        acceptance_rate_post_burn_in: (counters.accepted - burn_in_accepted) as f64 / post as f64,
        counters,
        running_acceptance: running,
        sampled_names: layout.names(),
        trace,
        adaptive_snapshots: snapshots,
    };
    Ok(ChainOutput {
        records,
        diagnostics,
    })
}
