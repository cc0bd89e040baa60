//! Result files: chain and trajectory CSVs, long-format band CSVs and JSON
//! summaries. Floats are written in their shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::analytics::{PosteriorSummary, PredictiveCurve};
use crate::config::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::filter::{Band, CloudSummary};
use crate::model::{LatentState, ModelParams};
use crate::pmcmc::{ChainDiagnostics, ChainRecord};
use crate::sde::LatentPath;

const CHAIN_LEAD: [&str; 4] = ["iteration", "accepted", "log_lik_hat", "log_prior"];

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

pub fn write_chain_csv(path: &Path, records: &[ChainRecord]) -> Result<()> {
    let n = records.first().map_or(0, |r| r.phi.n_contracts());
    let mut w = writer(path)?;
    let mut header: Vec<String> = CHAIN_LEAD.iter().map(|s| s.to_string()).collect();
    header.extend(ModelParams::flat_names(n));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.iteration.to_string(),
            (r.accepted as u8).to_string(),
            r.log_lik_hat.to_string(),
            r.log_prior.to_string(),
        ];
        row.extend(r.phi.flatten().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories_csv(path: &Path, records: &[ChainRecord], dates: &[NaiveDate]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iteration", "day", "date", "chi", "xi", "theta", "v"])?;
    for r in records {
        for t in 0..r.trajectory.len() {
            let s = r.trajectory.state(t);
            w.write_record([
                r.iteration.to_string(),
                t.to_string(),
                dates[t].to_string(),
                s.chi.to_string(),
                s.xi.to_string(),
                s.theta.to_string(),
                s.v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_path_csv(path: &Path, latent: &LatentPath, dates: &[NaiveDate]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["day", "date", "chi", "xi", "theta", "v"])?;
    for t in 0..latent.len() {
        let s = latent.state(t);
        w.write_record([
            t.to_string(),
            dates[t].to_string(),
            s.chi.to_string(),
            s.xi.to_string(),
            s.theta.to_string(),
            s.v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = rec.get(i).ok_or_else(|| parse_err(path, line, format!("missing column {}", i + 1)))?;
    s.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse `{s}` in column {}", i + 1)))
}

/// Reads a chain CSV and, if `trajectories` is given, attaches each
/// record's path. Returns the records and the trajectory dates.
pub fn read_chain(chain: &Path, trajectories: Option<&Path>) -> Result<(Vec<ChainRecord>, Vec<NaiveDate>)> {
    let mut rdr = csv::Reader::from_path(chain)?;
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let fixed = CHAIN_LEAD.len() + 10 + 6 + 11;
    if cols.len() < fixed || cols[..4] != CHAIN_LEAD {
        return Err(parse_err(chain, 1, "not a chain file: unexpected header"));
    }
    let n_contracts = cols.len() - fixed;
    let names = ModelParams::flat_names(n_contracts);
    if cols[4..] != names.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(parse_err(chain, 1, "parameter columns do not match the expected layout"));
    }
    let mut records = Vec::new();
    let mut index = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != cols.len() {
            return Err(parse_err(chain, line, format!("expected {} fields, found {}", cols.len(), rec.len())));
        }
        let iteration: usize = field(chain, line, &rec, 0)?;
        let accepted: u8 = field(chain, line, &rec, 1)?;
        let values = (4..cols.len())
            .map(|k| field::<f64>(chain, line, &rec, k))
            .collect::<Result<Vec<_>>>()?;
        index.insert(iteration, records.len());
        records.push(ChainRecord {
            iteration,
            phi: ModelParams::unflatten(&values, n_contracts)?,
            trajectory: LatentPath::default(),
            log_lik_hat: field(chain, line, &rec, 2)?,
            log_prior: field(chain, line, &rec, 3)?,
            accepted: accepted != 0,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyChain);
    }

    let mut dates = Vec::new();
    if let Some(tpath) = trajectories {
        let mut rdr = csv::Reader::from_path(tpath)?;
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["iteration", "day", "date", "chi", "xi", "theta", "v"] {
            return Err(parse_err(tpath, 1, "not a trajectories file: unexpected header"));
        }
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let iteration: usize = field(tpath, line, &rec, 0)?;
            let day: usize = field(tpath, line, &rec, 1)?;
            let date: NaiveDate = field(tpath, line, &rec, 2)?;
            let slot = *index
                .get(&iteration)
                .ok_or_else(|| parse_err(tpath, line, format!("iteration {iteration} not in chain")))?;
            let path = &mut records[slot].trajectory;
            if day != path.len() {
                return Err(parse_err(tpath, line, format!("day {day} out of order")));
            }
            if slot == 0 {
                dates.push(date);
            }
            path.push(LatentState {
                chi: field(tpath, line, &rec, 3)?,
                xi: field(tpath, line, &rec, 4)?,
                theta: field(tpath, line, &rec, 5)?,
                v: field(tpath, line, &rec, 6)?,
            });
        }
        if records.iter().any(|r| r.trajectory.len() != dates.len()) {
            return Err(parse_err(tpath, 1, "records have trajectories of different lengths"));
        }
    }
    Ok((records, dates))
}

fn band_row(day: usize, date: NaiveDate, name: &str, b: &Band) -> [String; 6] {
    [
        day.to_string(),
        date.to_string(),
        name.to_string(),
        b.mean.to_string(),
        b.lo.to_string(),
        b.hi.to_string(),
    ]
}

pub fn write_factor_bands_csv(path: &Path, summary: &PosteriorSummary) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["day", "date", "factor", "mean", "lo", "hi"])?;
    for f in &summary.factors {
        for (name, b) in [
            ("chi", &f.chi),
            ("xi", &f.xi),
            ("theta", &f.theta),
            ("v", &f.v),
            ("log_spot", &f.log_spot),
        ] {
            w.write_record(band_row(f.day, f.date, name, b))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cloud_bands_csv(path: &Path, clouds: &[CloudSummary], dates: &[NaiveDate]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["day", "date", "factor", "mean", "lo", "hi"])?;
    for (t, c) in clouds.iter().enumerate() {
        for (name, b) in [("chi", &c.chi), ("xi", &c.xi), ("theta", &c.theta), ("v", &c.v)] {
            w.write_record(band_row(t, dates[t], name, b))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictive_csv(path: &Path, curve: &PredictiveCurve) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["day", "date", "contract", "maturity", "out_of_sample", "mean", "lo", "hi"])?;
    for p in &curve.points {
        w.write_record([
            p.day.to_string(),
            p.date.to_string(),
            p.contract.to_string(),
            p.maturity.to_string(),
            (p.out_of_sample as u8).to_string(),
            p.mean.to_string(),
            p.lo.to_string(),
            p.hi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub command: String,
    pub n_records: usize,
    /// Over all iterations; absent when recomputed from a stored chain.
    pub acceptance_rate: Option<f64>,
    pub acceptance_rate_post_burn_in: Option<f64>,
    /// Share of retained records whose move was accepted.
    pub acceptance_rate_retained: f64,
    pub parameters: Vec<crate::analytics::ParameterSummary>,
}

impl SummaryFile {
    pub fn new(
        command: &str,
        records: &[ChainRecord],
        summary: &PosteriorSummary,
        diagnostics: Option<&ChainDiagnostics>,
    ) -> Self {
        let retained = records.iter().filter(|r| r.accepted).count() as f64 / records.len().max(1) as f64;
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            n_records: summary.n_records,
            acceptance_rate: diagnostics.map(|d| d.acceptance_rate),
            acceptance_rate_post_burn_in: diagnostics.map(|d| d.acceptance_rate_post_burn_in),
            acceptance_rate_retained: retained,
            parameters: summary.parameters.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub diagnostics: ChainDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFile {
    pub schema_version: u32,
    pub n_particles: usize,
    pub log_marginal_likelihood: f64,
    pub log_likelihood_increments: Vec<f64>,
    pub resample_count: usize,
}
