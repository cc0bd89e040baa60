//! Posterior summaries and the posterior predictive distribution of log
//! futures prices.
//!
//! Quantiles use linear interpolation between order statistics (type 7):
//! for sorted `x[0..n]`, `h = (n - 1) q` and the result is
//! `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::Band;
use crate::model::{log_futures_curve, seasonal_component, ContractSpec, ModelParams};
use crate::panel::FuturesPanel;
use crate::pmcmc::ChainRecord;
use crate::sde::{simulate_latent_path_with, DiscretizationConfig};

pub const LOWER: f64 = 0.025;
pub const UPPER: f64 = 0.975;

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and equal-tailed 95% interval of a sample.
pub fn band(values: &[f64]) -> Band {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Band {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        lo: quantile_sorted(&sorted, LOWER),
        hi: quantile_sorted(&sorted, UPPER),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayBands {
    pub day: usize,
    pub date: NaiveDate,
    pub chi: Band,
    pub xi: Band,
    pub theta: Band,
    pub v: Band,
    pub log_spot: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_records: usize,
    pub parameters: Vec<ParameterSummary>,
    /// Empty when the records carry no trajectories.
    pub factors: Vec<DayBands>,
}

/// Summarises retained records. `dates` are the observation dates of the
/// trajectories and supply the seasonal term of the log spot price.
pub fn summarize_chain(records: &[ChainRecord], dates: &[NaiveDate]) -> Result<PosteriorSummary> {
    let first = records.first().ok_or(Error::EmptyChain)?;
    let n_contracts = first.phi.n_contracts();
    let names = ModelParams::flat_names(n_contracts);
    let flats: Vec<Vec<f64>> = records.iter().map(|r| r.phi.flatten()).collect();
    let parameters = names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = flats.iter().map(|f| f[k]).collect();
            let b = band(&col);
            ParameterSummary {
                name,
                mean: b.mean,
                lo: b.lo,
                hi: b.hi,
            }
        })
        .collect();

    let days = first.trajectory.len();
    let mut factors = Vec::new();
    if days > 0 {
        if records.iter().any(|r| r.trajectory.len() != days) || dates.len() != days {
            return Err(Error::DimensionMismatch(format!(
                "trajectories and dates disagree on length ({} dates)",
                dates.len()
            )));
        }
        for (t, &date) in dates.iter().enumerate() {
            let col = |f: &dyn Fn(&ChainRecord) -> f64| -> Band {
                band(&records.iter().map(f).collect::<Vec<_>>())
            };
            factors.push(DayBands {
                day: t,
                date,
                chi: col(&|r| r.trajectory.chi[t]),
                xi: col(&|r| r.trajectory.xi[t]),
                theta: col(&|r| r.trajectory.theta[t]),
                v: col(&|r| r.trajectory.v[t]),
                log_spot: col(&|r| log_spot(r, t, date)),
            });
        }
    }
    Ok(PosteriorSummary {
        n_records: records.len(),
        parameters,
        factors,
    })
}

/// `chi + xi + theta + f(t)` for one record on day `t`.
pub fn log_spot(r: &ChainRecord, t: usize, date: NaiveDate) -> f64 {
    r.trajectory.state(t).log_spot_ex_season() + seasonal_component(date, &r.phi.seasonal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictivePoint {
    /// Row index; days past the panel continue the count.
    pub day: usize,
    pub date: NaiveDate,
    pub contract: usize,
    pub maturity: NaiveDate,
    pub out_of_sample: bool,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCurve {
    pub points: Vec<PredictivePoint>,
}

impl PredictiveCurve {
    pub fn get(&self, day: usize, contract: usize) -> Option<&PredictivePoint> {
        self.points
            .iter()
            .find(|p| p.day == day && p.contract == contract)
    }
}

/// Predictive distribution over the panel days and `horizon_days`
/// consecutive calendar days after the last panel date.
pub fn predictive_futures(
    records: &[ChainRecord],
    panel: &FuturesPanel,
    horizon_days: usize,
    disc: &DiscretizationConfig,
    seed: u64,
) -> Result<PredictiveCurve> {
    let last = *panel.dates.last().expect("validated panel is nonempty");
    let future: Vec<NaiveDate> = (1..=horizon_days as u64).map(|k| last + Days::new(k)).collect();
    predictive_futures_on(records, panel, &future, disc, seed)
}

/// As [`predictive_futures`] with explicit out-of-sample dates, one latent
/// step per date.
///
/// Each record's own path gives the in-sample states; out-of-sample states
/// are simulated forward from its terminal state under its real-world
/// parameters. Prices use the record's risk-neutral parameters plus
/// observation noise with the record's variances. Contracts past maturity
/// are skipped.
pub fn predictive_futures_on(
    records: &[ChainRecord],
    panel: &FuturesPanel,
    future_dates: &[NaiveDate],
    disc: &DiscretizationConfig,
    seed: u64,
) -> Result<PredictiveCurve> {
    if records.is_empty() {
        return Err(Error::EmptyChain);
    }
    let t_in = panel.n_days();
    if records.iter().any(|r| r.trajectory.len() != t_in) {
        return Err(Error::DimensionMismatch(format!(
            "predictive needs every record to carry a {t_in}-day trajectory"
        )));
    }
    let contracts = &panel.contracts;
    let dates: Vec<NaiveDate> = panel.dates.iter().chain(future_dates).copied().collect();
    let n_days = dates.len();
    let n_rec = records.len();

    // samples[day][contract][record]
    let mut samples = vec![vec![Vec::with_capacity(n_rec); contracts.len()]; n_days];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (ri, rec) in records.iter().enumerate() {
        rng.set_stream(ri as u64);
        rng.set_word_pos(0);
        let rn = rec.phi.risk_neutral()?;
        let start = rec.trajectory.last().expect("nonempty trajectory");
        let ahead = simulate_latent_path_with(&rec.phi.real, &start, future_dates.len(), disc, &mut rng);
        for (t, &date) in dates.iter().enumerate() {
            let state = if t < t_in {
                rec.trajectory.state(t)
            } else {
                ahead.state(t - t_in)
            };
            for (k, c) in contracts.iter().enumerate() {
                if date > c.maturity {
                    continue;
                }
                let mean = log_futures_curve(&rn, &rec.phi.seasonal, &state, std::slice::from_ref::<ContractSpec>(c), date)?[0];
                let z: f64 = StandardNormal.sample(&mut rng);
                samples[t][k].push(mean + rec.phi.real.obs_var[k].sqrt() * z);
            }
        }
    }

    let mut points = Vec::new();
    for (t, row) in samples.iter().enumerate() {
        for (k, vals) in row.iter().enumerate() {
            if vals.is_empty() {
                continue;
            }
            let b = band(vals);
            points.push(PredictivePoint {
                day: t,
                date: dates[t],
                contract: k,
                maturity: contracts[k].maturity,
                out_of_sample: t >= t_in,
                mean: b.mean,
                lo: b.lo,
                hi: b.hi,
            });
        }
    }
    Ok(PredictiveCurve { points })
}
