//! Model parameters, the real-world to risk-neutral map, the monthly seasonal
//! component and the closed-form log futures price.
//!
//! All rates are per day and all diffusion coefficients per square-root day.
//! The log spot price decomposes as `X(t) = chi + xi + theta + f(t)` and the
//! futures price is exponentially affine in `(xi, chi, theta)`:
//!
//! ```text
//! ln F(t, T) = f(T) + b0(tau) + b1(tau) xi + b2(tau) chi + theta,   tau = T - t
//! ```
//!
//! The variance factor `V` drops out of futures prices because the premium on
//! `theta` is pinned at `lambda4 = -1/2`.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-world (physical measure) parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealParams {
    pub beta: f64,
    pub mu_xi: f64,
    pub kappa_xi: f64,
    pub mu_v: f64,
    pub kappa_v: f64,
    pub sigma_chi: f64,
    pub sigma_xi: f64,
    pub sigma_v: f64,
    pub rho_xichi: f64,
    pub rho_vtheta: f64,
    /// Observation-noise variance per contract (log-price squared).
    pub obs_var: Vec<f64>,
}

impl RealParams {
    /// Structural checks. The `2 mu_v >= 1` admissibility bound is a prior
    /// constraint and lives in [`crate::pmcmc::prior`].
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.beta,
            self.mu_xi,
            self.kappa_xi,
            self.mu_v,
            self.kappa_v,
            self.sigma_chi,
            self.sigma_xi,
            self.sigma_v,
            self.rho_xichi,
            self.rho_vtheta,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite real parameter".into()));
        }
        if self.beta < 0.0 || self.kappa_xi < 0.0 || self.kappa_v < 0.0 {
            return Err(Error::InvalidParameter(
                "mean-reversion rates must be nonnegative".into(),
            ));
        }
        if self.sigma_chi < 0.0 || self.sigma_xi < 0.0 || self.sigma_v < 0.0 {
            return Err(Error::InvalidParameter(
                "diffusion coefficients must be nonnegative".into(),
            ));
        }
        if self.rho_xichi.abs() > 1.0 || self.rho_vtheta.abs() > 1.0 {
            return Err(Error::InvalidParameter(
                "correlations must lie in [-1, 1]".into(),
            ));
        }
        if self.obs_var.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(
                "observation variances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dimensionless market prices of risk.
///
/// `lambda4` is fixed at [`RiskPremia::LAMBDA4`] and `lambda5_star` at zero,
/// so neither is stored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskPremia {
    pub lambda0_star: f64,
    pub lambda1_star: f64,
    pub lambda2_star: f64,
    pub lambda3_star: f64,
    pub lambda6_star: f64,
    pub lambda7_star: f64,
}

impl RiskPremia {
    /// Premium on the volatility-driven component. With this value the
    /// risk-neutral drift of theta is `LAMBDA4 * V`, exp(theta) is a
    /// martingale and `V` drops out of futures prices.
    pub const LAMBDA4: f64 = -0.5;
    pub const LAMBDA5_STAR: f64 = 0.0;
}

/// Risk-neutral parameters, derived from [`RealParams`] and [`RiskPremia`]
/// by [`to_risk_neutral`] only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskNeutralParams {
    pub beta_star: f64,
    pub mu_xi_star: f64,
    pub kappa_xi_star: f64,
    pub mu_v_star: f64,
    pub kappa_v_star: f64,
    pub lambda0: f64,
    pub lambda4: f64,
    pub sigma_chi: f64,
    pub sigma_xi: f64,
    pub sigma_v: f64,
    pub rho_xichi: f64,
    pub rho_vtheta: f64,
}

/// Monthly log-price offsets for February..December; January is the
/// reference month with offset zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeasonalWeights(pub [f64; 11]);

impl SeasonalWeights {
    /// Offset for calendar month `month` (1 = January).
    pub fn for_month(&self, month: u32) -> f64 {
        match month {
            2..=12 => self.0[(month - 2) as usize],
            _ => 0.0,
        }
    }
}

/// The full static parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub real: RealParams,
    pub premia: RiskPremia,
    pub seasonal: SeasonalWeights,
}

impl ModelParams {
    pub fn risk_neutral(&self) -> Result<RiskNeutralParams> {
        to_risk_neutral(&self.real, &self.premia)
    }

    pub fn n_contracts(&self) -> usize {
        self.real.obs_var.len()
    }

    /// Column names for [`ModelParams::flatten`], in order.
    pub fn flat_names(n_contracts: usize) -> Vec<String> {
        let mut names: Vec<String> = [
            "beta",
            "mu_xi",
            "kappa_xi",
            "mu_v",
            "kappa_v",
            "sigma_chi",
            "sigma_xi",
            "sigma_v",
            "rho_xichi",
            "rho_vtheta",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.extend((1..=n_contracts).map(|n| format!("obs_var_{n}")));
        names.extend(
            [
                "lambda0_star",
                "lambda1_star",
                "lambda2_star",
                "lambda3_star",
                "lambda6_star",
                "lambda7_star",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        names.extend((2..=12).map(|k| format!("omega_{k}")));
        names
    }

    pub fn flatten(&self) -> Vec<f64> {
        let r = &self.real;
        let l = &self.premia;
        let mut v = vec![
            r.beta,
            r.mu_xi,
            r.kappa_xi,
            r.mu_v,
            r.kappa_v,
            r.sigma_chi,
            r.sigma_xi,
            r.sigma_v,
            r.rho_xichi,
            r.rho_vtheta,
        ];
        v.extend_from_slice(&r.obs_var);
        v.extend_from_slice(&[
            l.lambda0_star,
            l.lambda1_star,
            l.lambda2_star,
            l.lambda3_star,
            l.lambda6_star,
            l.lambda7_star,
        ]);
        v.extend_from_slice(&self.seasonal.0);
        v
    }

    pub fn unflatten(values: &[f64], n_contracts: usize) -> Result<Self> {
        let expected = 10 + n_contracts + 6 + 11;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} parameter values, got {}",
                values.len()
            )));
        }
        let obs_end = 10 + n_contracts;
        let p = &values[obs_end..obs_end + 6];
        let mut omega = [0.0; 11];
        omega.copy_from_slice(&values[obs_end + 6..]);
        Ok(Self {
            real: RealParams {
                beta: values[0],
                mu_xi: values[1],
                kappa_xi: values[2],
                mu_v: values[3],
                kappa_v: values[4],
                sigma_chi: values[5],
                sigma_xi: values[6],
                sigma_v: values[7],
                rho_xichi: values[8],
                rho_vtheta: values[9],
                obs_var: values[10..obs_end].to_vec(),
            },
            premia: RiskPremia {
                lambda0_star: p[0],
                lambda1_star: p[1],
                lambda2_star: p[2],
                lambda3_star: p[3],
                lambda6_star: p[4],
                lambda7_star: p[5],
            },
            seasonal: SeasonalWeights(omega),
        })
    }
}

/// Latent factor values on one day.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentState {
    pub chi: f64,
    pub xi: f64,
    pub theta: f64,
    pub v: f64,
}

impl LatentState {
    /// Log spot price excluding the seasonal term.
    pub fn log_spot_ex_season(&self) -> f64 {
        self.chi + self.xi + self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContractSpec {
    pub maturity: NaiveDate,
}

impl ContractSpec {
    pub fn new(maturity: NaiveDate) -> Self {
        Self { maturity }
    }

    /// Calendar days to maturity as seen from `date`; negative once expired.
    pub fn tau(&self, date: NaiveDate) -> f64 {
        (self.maturity - date).num_days() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

pub fn seasonal_component(date: NaiveDate, w: &SeasonalWeights) -> f64 {
    w.for_month(date.month())
}

pub fn to_risk_neutral(r: &RealParams, l: &RiskPremia) -> Result<RiskNeutralParams> {
    let lambda0 = l.lambda0_star * r.sigma_chi;
    let lambda1 = l.lambda1_star * r.sigma_chi;
    let lambda2 = l.lambda2_star * r.sigma_xi;
    let lambda3 = l.lambda3_star * r.sigma_xi;
    let lambda6 = l.lambda6_star * r.sigma_v;
    let lambda7 = l.lambda7_star * r.sigma_v;

    let rn = RiskNeutralParams {
        beta_star: r.beta + lambda1,
        mu_xi_star: r.mu_xi - lambda2,
        kappa_xi_star: r.kappa_xi + lambda3,
        mu_v_star: r.mu_v - lambda6,
        kappa_v_star: r.kappa_v + lambda7,
        lambda0,
        lambda4: RiskPremia::LAMBDA4,
        sigma_chi: r.sigma_chi,
        sigma_xi: r.sigma_xi,
        sigma_v: r.sigma_v,
        rho_xichi: r.rho_xichi,
        rho_vtheta: r.rho_vtheta,
    };
    if rn.beta_star < 0.0 || rn.kappa_xi_star < 0.0 || rn.kappa_v_star < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "negative risk-neutral mean reversion (beta*={}, kappa_xi*={}, kappa_v*={})",
            rn.beta_star, rn.kappa_xi_star, rn.kappa_v_star
        )));
    }
    Ok(rn)
}

/// `(1 - exp(-k tau)) / k`, continuous at `k = 0`.
fn decay_integral(k: f64, tau: f64) -> f64 {
    let x = k * tau;
    if x.abs() < 1e-12 {
        tau
    } else {
        -(-x).exp_m1() / k
    }
}

/// Loadings of the exponentially affine futures price.
///
/// `b0` is the solution of
/// `db0/dtau = mu_xi* b1 - lambda0 b2 + sigma_xi^2 b1^2 / 2 + sigma_chi^2 b2^2 / 2 + rho sigma_chi sigma_xi b1 b2`
/// with `b0(0) = 0`.
pub fn b_coefficients(tau: f64, rn: &RiskNeutralParams) -> Result<BCoefficients> {
    let k = rn.kappa_xi_star;
    let b = rn.beta_star;
    if !(k > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "b-coefficients need kappa_xi* > 0 and beta* > 0 (got {k}, {b})"
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time to maturity must be nonnegative, got {tau}"
        )));
    }
    let b0 = rn.mu_xi_star * decay_integral(k, tau) - rn.lambda0 * decay_integral(b, tau)
        + 0.5 * rn.sigma_xi * rn.sigma_xi * decay_integral(2.0 * k, tau)
        + 0.5 * rn.sigma_chi * rn.sigma_chi * decay_integral(2.0 * b, tau)
        + rn.rho_xichi * rn.sigma_chi * rn.sigma_xi * decay_integral(k + b, tau);
    Ok(BCoefficients {
        b0,
        b1: (-k * tau).exp(),
        b2: (-b * tau).exp(),
        b3: 1.0,
    })
}

/// Noiseless log futures prices for each contract on observation date `t`.
pub fn log_futures_curve(
    rn: &RiskNeutralParams,
    w: &SeasonalWeights,
    s: &LatentState,
    contracts: &[ContractSpec],
    t: NaiveDate,
) -> Result<Vec<f64>> {
    contracts
        .iter()
        .map(|c| {
            let b = b_coefficients(c.tau(t), rn)?;
            Ok(seasonal_component(c.maturity, w)
                + b.b0
                + b.b1 * s.xi
                + b.b2 * s.chi
                + b.b3 * s.theta)
        })
        .collect()
}
