//! Run configuration, read from TOML. Every table and key is optional;
//! omitted values take the defaults below. Unknown keys are rejected.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentState, ModelParams, RealParams, RiskPremia, SeasonalWeights};
use crate::panel::ContractSchedule;
use crate::pmcmc::{ChainConfig, PriorSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// The synthetic benchmark parameters with `n` contracts.
pub fn reference_model(n_contracts: usize) -> ModelParams {
    ModelParams {
        real: RealParams {
            beta: 0.2,
            mu_xi: 0.1,
            kappa_xi: 0.4,
            mu_v: 0.2,
            kappa_v: 0.2,
            sigma_chi: 0.5,
            sigma_xi: 0.5,
            sigma_v: 0.5,
            rho_xichi: 0.0,
            rho_vtheta: 0.0,
            obs_var: vec![4.0; n_contracts],
        },
        premia: RiskPremia::default(),
        seasonal: SeasonalWeights::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub start_date: NaiveDate,
    pub days: usize,
    pub schedule: ContractSchedule,
    pub init: LatentState,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            days: 100,
            schedule: ContractSchedule::default(),
            init: LatentState {
                v: 1.0,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub horizon: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { horizon: 5 }
    }
}

fn default_prior() -> PriorSpec {
    PriorSpec {
        boundary_nonattainment: false,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. Overrides `chain.seed`.
    pub seed: u64,
    /// True parameters for `simulate`, fixed parameters for `filter`, and
    /// the initial chain state for `calibrate`.
    pub model: ModelParams,
    /// Start `calibrate` from a prior draw instead of `model`.
    pub init_from_prior: bool,
    pub simulate: SimulateConfig,
    /// Omitting the whole table disables the `2 mu_v >= 1` bound, which the
    /// reference model violates. A partial `[prior]` table starts from
    /// [`PriorSpec::default`], where the bound is on.
    #[serde(default = "default_prior")]
    pub prior: PriorSpec,
    pub chain: ChainConfig,
    pub predict: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let simulate = SimulateConfig::default();
        Self {
            seed: 0,
            model: reference_model(simulate.schedule.n_contracts),
            init_from_prior: false,
            simulate,
            prior: default_prior(),
            chain: ChainConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the master seed and checks every section.
    pub fn finalize(mut self) -> Result<Self> {
        self.chain.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.real.validate()?;
        self.model.risk_neutral()?;
        if self.simulate.days == 0 {
            return Err(Error::Config("simulate.days must be positive".into()));
        }
        self.prior.validate()?;
        self.chain.validate()
    }
}
