//! Command-line interface.
//!
//! Exit status: 0 on success, 1 on input errors (arguments, config, files),
//! 2 on numerical failure of the filter.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytics::{predictive_futures, summarize_chain};
use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::filter::{rb_sir_filter, FilterConfig};
use crate::panel::{generate_panel, parse_panel, write_panel_file};
use crate::pmcmc::{run_chain, sample_prior};
use crate::results::{
    read_chain, write_chain_csv, write_cloud_bands_csv, write_factor_bands_csv, write_json,
    write_path_csv, write_predictive_csv, write_trajectories_csv, DiagnosticsFile, FilterFile,
    SummaryFile,
};

pub const OUT_DIR_ENV: &str = "COMMODITY_PMCMC_OUT";
const DEFAULT_OUT_DIR: &str = "commodity-pmcmc-out";

#[derive(Debug, Parser)]
#[command(name = "commodity-pmcmc", version, about = "Calibrate and filter a four-factor commodity futures model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $COMMODITY_PMCMC_OUT or ./commodity-pmcmc-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a synthetic panel and its latent path.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the particle MCMC sampler on a panel.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Panel CSV of futures prices.
        #[arg(long)]
        panel: PathBuf,
    },
    /// Run the particle filter at the configured parameters.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: PathBuf,
        /// Particle count [default: chain.n_particles].
        #[arg(long)]
        particles: Option<usize>,
    },
    /// Posterior predictive log futures prices from a calibrated chain.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: PathBuf,
        /// Directory written by `calibrate`.
        #[arg(long)]
        chain_dir: PathBuf,
        /// Out-of-sample days [default: predict.horizon].
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Recompute summaries from a stored chain.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chain_dir: PathBuf,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn prepare(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.finalize()?;
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    Ok((cfg, out))
}

fn check_contracts(cfg: &RunConfig, n: usize) -> Result<()> {
    if cfg.model.n_contracts() != n {
        return Err(Error::Config(format!(
            "panel has {n} contracts but model.real.obs_var has {} entries",
            cfg.model.n_contracts()
        )));
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<PathBuf> {
    match cmd {
        Command::Simulate { common } => {
            let (cfg, out) = prepare(&common)?;
            let s = &cfg.simulate;
            let (panel, path) = generate_panel(
                &cfg.model,
                &s.schedule,
                s.start_date,
                s.days,
                &s.init,
                &cfg.chain.filter.disc,
                cfg.seed,
            )?;
            write_panel_file(&panel, &out.join("panel.csv"))?;
            write_path_csv(&out.join("truth.csv"), &path, &panel.dates)?;
            Ok(out)
        }
        Command::Calibrate { common, panel } => {
            let (cfg, out) = prepare(&common)?;
            let panel = parse_panel(&panel)?;
            check_contracts(&cfg, panel.n_contracts())?;
            let init = if cfg.init_from_prior {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(1);
                sample_prior(&cfg.prior, &cfg.model, &mut rng)?
            } else {
                cfg.model.clone()
            };
            let chain = run_chain(&panel, &cfg.prior, &init, &cfg.chain)?;
            let summary = summarize_chain(&chain.records, &panel.dates)?;
            write_chain_csv(&out.join("chain.csv"), &chain.records)?;
            if cfg.chain.keep_trajectories {
                write_trajectories_csv(&out.join("trajectories.csv"), &chain.records, &panel.dates)?;
                write_factor_bands_csv(&out.join("factor_bands.csv"), &summary)?;
            }
            write_json(
                &out.join("summary.json"),
                &SummaryFile::new("calibrate", &chain.records, &summary, Some(&chain.diagnostics)),
            )?;
            write_json(
                &out.join("diagnostics.json"),
                &DiagnosticsFile {
                    schema_version: SCHEMA_VERSION,
                    diagnostics: chain.diagnostics,
                },
            )?;
            Ok(out)
        }
        Command::Filter {
            common,
            panel,
            particles,
        } => {
            let (cfg, out) = prepare(&common)?;
            let panel = parse_panel(&panel)?;
            check_contracts(&cfg, panel.n_contracts())?;
            let n = particles.unwrap_or(cfg.chain.n_particles);
            let fcfg = FilterConfig {
                summaries: true,
                ..cfg.chain.filter
            };
            let res = rb_sir_filter(&cfg.model, &panel, n, &fcfg, cfg.seed)?;
            let clouds = res.cloud_summaries.as_deref().unwrap_or_default();
            write_cloud_bands_csv(&out.join("factor_bands.csv"), clouds, &panel.dates)?;
            write_path_csv(&out.join("trajectory.csv"), &res.sampled_trajectory, &panel.dates)?;
            write_json(
                &out.join("filter.json"),
                &FilterFile {
                    schema_version: SCHEMA_VERSION,
                    n_particles: n,
                    log_marginal_likelihood: res.log_marginal_likelihood,
                    log_likelihood_increments: res.log_likelihood_increments,
                    resample_count: res.resample_count,
                },
            )?;
            Ok(out)
        }
        Command::Predict {
            common,
            panel,
            chain_dir,
            horizon,
        } => {
            let (cfg, out) = prepare(&common)?;
            let panel = parse_panel(&panel)?;
            let (records, dates) = load_chain(&chain_dir, true)?;
            if dates != panel.dates {
                return Err(Error::InvalidPanel(
                    "panel dates do not match the stored trajectories".into(),
                ));
            }
            let h = horizon.unwrap_or(cfg.predict.horizon);
            let curve = predictive_futures(&records, &panel, h, &cfg.chain.filter.disc, cfg.seed)?;
            write_predictive_csv(&out.join("predictive.csv"), &curve)?;
            Ok(out)
        }
        Command::Summarize { common, chain_dir } => {
            let (_, out) = prepare(&common)?;
            let has_paths = chain_dir.join("trajectories.csv").exists();
            let (records, dates) = load_chain(&chain_dir, has_paths)?;
            let summary = summarize_chain(&records, &dates)?;
            if has_paths {
                write_factor_bands_csv(&out.join("factor_bands.csv"), &summary)?;
            }
            write_json(
                &out.join("summary.json"),
                &SummaryFile::new("summarize", &records, &summary, None),
            )?;
            Ok(out)
        }
    }
}

fn load_chain(dir: &Path, with_paths: bool) -> Result<(Vec<crate::pmcmc::ChainRecord>, Vec<chrono::NaiveDate>)> {
    let traj = dir.join("trajectories.csv");
    read_chain(&dir.join("chain.csv"), with_paths.then_some(traj.as_path()))
}
