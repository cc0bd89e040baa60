//! Futures panels: storage, CSV ingestion and export, and synthetic
//! generation.
//!
//! CSV layout: a header `date,<maturity>,<maturity>,...` with ISO-8601
//! dates, then one row per observation day holding raw futures prices.
//! Blank cells are missing. Prices are log-transformed on read.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_futures_curve, ContractSpec, LatentState, ModelParams};
use crate::sde::{simulate_latent_path_with, DiscretizationConfig, LatentPath};

#[derive(Debug, Clone, PartialEq)]
pub struct FuturesPanel {
    pub dates: Vec<NaiveDate>,
    pub contracts: Vec<ContractSpec>,
    /// `log_prices[t][n]`; unobserved cells hold NaN.
    pub log_prices: Vec<Vec<f64>>,
    /// `observed[t][n]` is false for missing cells.
    pub observed: Vec<Vec<bool>>,
}

impl FuturesPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        contracts: Vec<ContractSpec>,
        log_prices: Vec<Vec<f64>>,
        observed: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let panel = Self {
            dates,
            contracts,
            log_prices,
            observed,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, n) = (self.dates.len(), self.contracts.len());
        if t == 0 || n == 0 {
            return Err(Error::InvalidPanel("panel has no days or no contracts".into()));
        }
        if self.log_prices.len() != t
            || self.observed.len() != t
            || self.log_prices.iter().any(|r| r.len() != n)
            || self.observed.iter().any(|r| r.len() != n)
        {
            return Err(Error::InvalidPanel(format!(
                "price matrix does not match {t} days x {n} contracts"
            )));
        }
        for w in self.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidPanel(format!(
                    "dates must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        for (day, date) in self.dates.iter().enumerate() {
            for (k, c) in self.contracts.iter().enumerate() {
                if !self.observed[day][k] {
                    continue;
                }
                if *date > c.maturity {
                    return Err(Error::InvalidPanel(format!(
                        "contract maturing {} observed on {date}",
                        c.maturity
                    )));
                }
                if !self.log_prices[day][k].is_finite() {
                    return Err(Error::InvalidPanel(format!(
                        "non-finite log price on {date}, contract {}",
                        c.maturity
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_contracts(&self) -> usize {
        self.contracts.len()
    }

    /// `(contract index, log price)` for the contracts observed on day `t`.
    pub fn observations(&self, t: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.observed[t]
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(move |(n, _)| (n, self.log_prices[t][n]))
    }

    /// The first `days` rows.
    pub fn head(&self, days: usize) -> Result<Self> {
        let days = days.min(self.n_days());
        Self::new(
            self.dates[..days].to_vec(),
            self.contracts.clone(),
            self.log_prices[..days].to_vec(),
            self.observed[..days].to_vec(),
        )
    }

    /// Rows from `start` to the end.
    pub fn tail_from(&self, start: usize) -> Result<Self> {
        Self::new(
            self.dates[start..].to_vec(),
            self.contracts.clone(),
            self.log_prices[start..].to_vec(),
            self.observed[start..].to_vec(),
        )
    }
}

pub fn parse_panel(path: &Path) -> Result<FuturesPanel> {
    let file = std::fs::File::open(path)?;
    read_panel(file, path)
}

/// Parses CSV from `reader`; `path` is only used in error messages.
pub fn read_panel<R: Read>(reader: R, path: &Path) -> Result<FuturesPanel> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    if header.get(0).map(|h| h.eq_ignore_ascii_case("date")) != Some(true) {
        return Err(parse_err(1, "first column must be `date`".into()));
    }
    let mut contracts = Vec::with_capacity(header.len().saturating_sub(1));
    for h in header.iter().skip(1) {
        let maturity = NaiveDate::parse_from_str(h, "%Y-%m-%d")
            .map_err(|e| parse_err(1, format!("bad maturity `{h}`: {e}")))?;
        contracts.push(ContractSpec::new(maturity));
    }
    if contracts.is_empty() {
        return Err(parse_err(1, "no contract columns".into()));
    }

    let n = contracts.len();
    let (mut dates, mut log_prices, mut observed) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", n + 1, rec.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &rec[0])))?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(parse_err(line, format!("date {date} does not follow {prev}")));
            }
        }
        let mut row = vec![f64::NAN; n];
        let mut mask = vec![false; n];
        for k in 0..n {
            let cell = &rec[k + 1];
            if cell.is_empty() {
                continue;
            }
            let price: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("bad price `{cell}`")))?;
            if !(price > 0.0 && price.is_finite()) {
                return Err(parse_err(line, format!("non-positive price {price}")));
            }
            if date > contracts[k].maturity {
                return Err(parse_err(
                    line,
                    format!("contract {} observed after maturity", contracts[k].maturity),
                ));
            }
            row[k] = price.ln();
            mask[k] = true;
        }
        dates.push(date);
        log_prices.push(row);
        observed.push(mask);
    }
    if dates.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    FuturesPanel::new(dates, contracts, log_prices, observed)
}

pub fn write_panel<W: Write>(panel: &FuturesPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.contracts.iter().map(|c| c.maturity.to_string()));
    w.write_record(&header)?;
    for t in 0..panel.n_days() {
        let mut row = vec![panel.dates[t].to_string()];
        for k in 0..panel.n_contracts() {
            row.push(if panel.observed[t][k] {
                format!("{:.16e}", panel.log_prices[t][k].exp())
            } else {
                String::new()
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_panel_file(panel: &FuturesPanel, path: &Path) -> Result<()> {
    write_panel(panel, std::fs::File::create(path)?)
}

/// Maturity layout relative to the first observation date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSchedule {
    /// Days from the first observation date to the first maturity.
    pub first_maturity_days: u64,
    pub spacing_days: u64,
    pub n_contracts: usize,
}

impl Default for ContractSchedule {
    fn default() -> Self {
        Self {
            first_maturity_days: 29,
            spacing_days: 30,
            n_contracts: 10,
        }
    }
}

impl ContractSchedule {
    pub fn contracts(&self, start: NaiveDate) -> Vec<ContractSpec> {
        (0..self.n_contracts as u64)
            .map(|k| {
                ContractSpec::new(start + Days::new(self.first_maturity_days + k * self.spacing_days))
            })
            .collect()
    }
}

/// Consecutive calendar dates starting at `start`.
pub fn daily_dates(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    (0..days as u64).map(|k| start + Days::new(k)).collect()
}

/// Simulates a latent path from `init` and the noisy panel it generates.
/// Contracts past maturity are left unobserved.
pub fn generate_panel(
    phi: &ModelParams,
    schedule: &ContractSchedule,
    start: NaiveDate,
    days: usize,
    init: &LatentState,
    cfg: &DiscretizationConfig,
    seed: u64,
) -> Result<(FuturesPanel, LatentPath)> {
    phi.real.validate()?;
    cfg.validate()?;
    if schedule.n_contracts != phi.n_contracts() {
        return Err(Error::DimensionMismatch(format!(
            "{} contracts but {} observation variances",
            schedule.n_contracts,
            phi.n_contracts()
        )));
    }
    let rn = phi.risk_neutral()?;
    let contracts = schedule.contracts(start);
    let dates = daily_dates(start, days);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = simulate_latent_path_with(&phi.real, init, days, cfg, &mut rng);
    let noise: Vec<Normal<f64>> = phi
        .real
        .obs_var
        .iter()
        .map(|&s| Normal::new(0.0, s.sqrt()).expect("validated variance"))
        .collect();

    let mut log_prices = Vec::with_capacity(days);
    let mut observed = Vec::with_capacity(days);
    for (t, date) in dates.iter().enumerate() {
        let live: Vec<bool> = contracts.iter().map(|c| *date <= c.maturity).collect();
        let live_specs: Vec<ContractSpec> = contracts
            .iter()
            .zip(&live)
            .filter(|(_, &l)| l)
            .map(|(c, _)| *c)
            .collect();
        let curve = log_futures_curve(&rn, &phi.seasonal, &path.state(t), &live_specs, *date)?;
        let mut row = vec![f64::NAN; contracts.len()];
        let mut it = curve.into_iter();
        for k in 0..contracts.len() {
            if live[k] {
                row[k] = it.next().expect("one price per live contract") + noise[k].sample(&mut rng);
            }
        }
        log_prices.push(row);
        observed.push(live);
    }
    let panel = FuturesPanel::new(dates, contracts, log_prices, observed)?;
    Ok((panel, path))
}
