//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits non-zero if any fails.
//!
//! `cargo test --release --test acceptance -- C4 C5` runs a subset.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::Days;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use commodity_pmcmc::analytics::{predictive_futures, summarize_chain};
use commodity_pmcmc::config::reference_model;
use commodity_pmcmc::filter::{
    assemble_ssm, kalman_step, rb_sir_filter, FilterConfig, InitialDistribution,
};
use commodity_pmcmc::model::{log_futures_curve, ContractSpec, LatentState, RiskPremia};
use commodity_pmcmc::panel::{generate_panel, ContractSchedule, FuturesPanel};
use commodity_pmcmc::pmcmc::{run_chain, ChainConfig, ParamPrior, PriorSpec};
use commodity_pmcmc::results::SummaryFile;
use commodity_pmcmc::sde::{levy_area_pair, rho_p, DiscretizationConfig, StepShocks};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Vec<(&'static str, Outcome)>); 7] = [
        ("C1", "pricing oracle", || vec![("C1", c1_pricing())]),
        ("C2", "levy-area identity", || vec![("C2", c2_levy_identity())]),
        ("C3", "rao-blackwellised likelihood", || vec![("C3", c3_rb_oracle())]),
        ("C4", "kalman joint density", || vec![("C4", c4_kalman_joint())]),
        ("C5", "pmcmc exactness", || vec![("C5", c5_pmcmc_exact())]),
        ("C6", "synthetic recovery, acceptance band, predictive coverage", c6_c7_c8),
        ("C9", "cli reproducibility", || vec![("C9", c9_cli_hashes())]),
    ];
    let selected = |id: &str| {
        filters.is_empty()
            || filters.iter().any(|f| {
                id.contains(f.as_str()) || (id == "C6" && (f == "C7" || f == "C8"))
            })
    };
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !selected(id) {
            continue;
        }
        let t = Instant::now();
        for (cid, o) in run() {
            ran += 1;
            if !o.pass {
                failed += 1;
            }
            println!(
                "{cid} {name}: {} ({}) [{:.1}s]",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail,
                t.elapsed().as_secs_f64()
            );
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Futures prices at tau in {1, 30, 300} days against Monte Carlo
/// E*[exp X_T] with 10^6 paths of the risk-neutral Euler scheme at
/// dt = 1/50 day.
///
/// With rho_vtheta = 0 and the theta drift -V/2, exp(theta) is a
/// conditional martingale given the variance path, so E*[exp theta_T | V]
/// = exp(theta_t) and theta is integrated analytically. The fine Euler
/// recursion for (chi, xi) is linear with Gaussian increments, so its
/// terminal law after tau/h steps is Gaussian with moments given by the same
/// recursion; each path's terminal value is drawn from that law directly.
fn c1_pricing() -> Outcome {
    let t0 = Instant::now();
    let phi = reference_model(1);
    let rn = phi.risk_neutral().unwrap();
    let s0 = LatentState {
        chi: 0.3,
        xi: 0.5,
        theta: 0.1,
        v: 1.0,
    };
    let date = start_date();
    let h = 1.0 / 50.0;
    let n_paths = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    let mut pass = true;
    for tau in [1u64, 30, 300] {
        let ct = ContractSpec::new(date + Days::new(tau));
        let closed = log_futures_curve(&rn, &phi.seasonal, &s0, &[ct], date).unwrap()[0].exp();

        let a = Matrix2::new(1.0 - rn.beta_star * h, 0.0, 0.0, 1.0 - rn.kappa_xi_star * h);
        let c = Vector2::new(-rn.lambda0 * h, rn.mu_xi_star * h);
        let cross = rn.rho_xichi * rn.sigma_chi * rn.sigma_xi * h;
        let q = Matrix2::new(
            rn.sigma_chi * rn.sigma_chi * h,
            cross,
            cross,
            rn.sigma_xi * rn.sigma_xi * h,
        );
        let mut m = Vector2::new(s0.chi, s0.xi);
        let mut p = Matrix2::zeros();
        for _ in 0..(tau as usize * 50) {
            m = a * m + c;
            p = a * p * a.transpose() + q;
        }
        let l = p.cholesky().unwrap().l();
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n_paths {
            let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let x = m + l * z;
            let f = (x[0] + x[1] + s0.theta).exp();
            sum += f;
            sum2 += f * f;
        }
        let n = n_paths as f64;
        let mean = sum / n;
        let se = ((sum2 / n - mean * mean) / (n - 1.0)).sqrt();
        let z = (mean - closed).abs() / se;
        worst = worst.max(z);
        pass &= z <= 3.0;
        details.push(format!("tau={tau}: {closed:.6} vs {mean:.6}, {z:.2} se"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed <= Duration::from_secs(300);
    outcome(pass, format!("{}; max {worst:.2} se", details.join("; ")))
}

/// Kahan-compensated sum of 1/r^2 in reverse order.
fn inverse_square_sum(p: usize) -> f64 {
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for r in (1..=p).rev() {
        let y = 1.0 / ((r * r) as f64) - comp;
        let t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    s
}

fn c2_levy_identity() -> Outcome {
    let p = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut shocks = StepShocks::zeros(p);
    let mut worst = 0.0f64;
    for k in 0..100_000 {
        shocks.draw(&mut rng, p);
        let dt = [1.0, 0.5, 0.01, 3.0][k % 4];
        let (j12, j21) = levy_area_pair(dt, &shocks, p).unwrap();
        worst = worst.max((j12 + j21 - dt * shocks.zeta1() * shocks.zeta2()).abs());
    }
    let rho0_exact = rho_p(0) == 1.0 / 12.0;
    let direct = 1.0 / 12.0 - inverse_square_sum(100) / (2.0 * std::f64::consts::PI.powi(2));
    let rho100_err = (rho_p(100) - direct).abs();
    outcome(
        worst <= 1e-12 && rho0_exact && rho100_err <= 1e-15,
        format!(
            "max identity error {worst:.2e}; rho_p(0) exact: {rho0_exact}; rho_p(100) error {rho100_err:.1e}"
        ),
    )
}

fn c3_rb_oracle() -> Outcome {
    let t0 = Instant::now();
    let n_contracts = 5;
    let phi = constant_variance_model(n_contracts);
    let schedule = ContractSchedule {
        n_contracts,
        ..Default::default()
    };
    let disc = DiscretizationConfig {
        p: 0,
        ..Default::default()
    };
    let init_state = LatentState {
        v: 1.0,
        ..Default::default()
    };
    let (panel, _) = generate_panel(&phi, &schedule, start_date(), 20, &init_state, &disc, 77).unwrap();
    let cfg = FilterConfig {
        disc,
        init: InitialDistribution {
            mean: [0.0, 0.0, 0.0, 1.0],
            cov_long_short: [[1.0, 0.0], [0.0, 1.0]],
            cov_vol: [[1.0, 0.0], [0.0, 0.0]],
        },
        ..Default::default()
    };
    let exact = exact_constant_variance_loglik(&phi, &panel, &cfg.init, disc.dt);
    let est: Vec<f64> = (0..50)
        .map(|s| rb_sir_filter(&phi, &panel, 100, &cfg, s).unwrap().log_marginal_likelihood)
        .collect();
    let (mean, sd) = mean_sd(&est);
    let elapsed = t0.elapsed();
    outcome(
        (mean - exact).abs() <= 3.0 * sd && elapsed <= Duration::from_secs(120),
        format!(
            "exact {exact:.4}, filter mean {mean:.4}, sd {sd:.4}, |diff|/sd {:.2}",
            (mean - exact).abs() / sd
        ),
    )
}

fn c4_kalman_joint() -> Outcome {
    let mut phi = reference_model(2);
    phi.real.rho_xichi = 0.3;
    phi.real.obs_var = vec![0.7, 1.3];
    phi.premia = RiskPremia {
        lambda0_star: 0.1,
        lambda1_star: 0.2,
        lambda2_star: -0.1,
        lambda3_star: 0.3,
        ..Default::default()
    };
    phi.seasonal.0[0] = 0.2;
    phi.seasonal.0[2] = -0.4;
    let rn = phi.risk_neutral().unwrap();
    let date0 = start_date() + Days::new(25);
    let contracts = [
        ContractSpec::new(start_date() + Days::new(40)),
        ContractSpec::new(start_date() + Days::new(70)),
    ];
    let thetas = [0.3, -0.2, 0.5];
    let y = [[1.2, 0.4], [-0.5, 2.1], [0.9, 1.7]];
    let m0 = Vector2::new(0.1, -0.3);
    let p0 = Matrix2::new(0.8, 0.1, 0.1, 1.5);

    let mut m = m0;
    let mut p = p0;
    let mut summed = 0.0;
    let mut specs = Vec::new();
    for t in 0..3 {
        let date = date0 + Days::new(t as u64);
        let spec = assemble_ssm(&phi.real, &rn, &phi.seasonal, &contracts, date, thetas[t], 1.0).unwrap();
        let out = kalman_step(&m, &p, &spec, &y[t]).unwrap();
        summed += out.log_predictive;
        m = out.mean;
        p = out.cov;
        specs.push(spec);
    }

    // Stack the states x_0..x_2 and the six observations directly.
    let a = specs[0].a;
    let c = specs[0].c;
    let q = specs[0].q;
    let mut means = Vec::new();
    let mut covs = Vec::new();
    let (mut mx, mut px) = (m0, p0);
    for _ in 0..3 {
        mx = a * mx + c;
        px = a * px * a.transpose() + q;
        means.push(mx);
        covs.push(px);
    }
    let mut mean = DVector::zeros(6);
    let mut cov = DMatrix::zeros(6, 6);
    let mut obs = DVector::zeros(6);
    for s in 0..3 {
        for i in 0..2 {
            let row = 2 * s + i;
            let hs = specs[s].h[i];
            mean[row] = hs.dot(&means[s]) + specs[s].d[i];
            obs[row] = y[s][i];
            for t in 0..3 {
                // Cov(x_s, x_t) = P_s (A^{t-s})' for t >= s.
                let cross = if t >= s {
                    covs[s] * a.pow((t - s) as u32).transpose()
                } else {
                    a.pow((s - t) as u32) * covs[t]
                };
                for j in 0..2 {
                    cov[(row, 2 * t + j)] = hs.dot(&(cross * specs[t].h[j]));
                }
            }
            cov[(row, row)] += specs[s].r[i];
        }
    }
    let joint = gaussian_log_density(&obs, &mean, &cov);
    let err = (joint - summed).abs();
    outcome(err <= 1e-8, format!("summed {summed:.12}, joint {joint:.12}, error {err:.1e}"))
}

/// One-contract, two-day constant-variance model with only beta free.
fn c5_model() -> (commodity_pmcmc::model::ModelParams, FuturesPanel, FilterConfig, PriorSpec) {
    let phi = constant_variance_model(1);
    let schedule = ContractSchedule {
        n_contracts: 1,
        ..Default::default()
    };
    let disc = DiscretizationConfig {
        p: 0,
        ..Default::default()
    };
    let init_state = LatentState {
        v: 1.0,
        ..Default::default()
    };
    let (panel, _) = generate_panel(&phi, &schedule, start_date(), 2, &init_state, &disc, 5).unwrap();
    let cfg = FilterConfig {
        disc,
        init: InitialDistribution {
            mean: [0.0, 0.0, 0.0, 1.0],
            cov_long_short: [[1.0, 0.0], [0.0, 1.0]],
            cov_vol: [[1.0, 0.0], [0.0, 0.0]],
        },
        ..Default::default()
    };
    let mut prior = PriorSpec {
        boundary_nonattainment: false,
        ..Default::default()
    };
    for p in [
        &mut prior.mu_xi,
        &mut prior.kappa_xi,
        &mut prior.mu_v,
        &mut prior.kappa_v,
        &mut prior.sigma2_chi,
        &mut prior.sigma2_xi,
        &mut prior.sigma2_v,
        &mut prior.rho_xichi,
        &mut prior.rho_vtheta,
        &mut prior.omega,
    ] {
        *p = ParamPrior::Fixed;
    }
    prior.premia = [ParamPrior::Fixed; 6];
    prior.obs_var.fixed = true;
    (phi, panel, cfg, prior)
}

fn c5_pmcmc_exact() -> Outcome {
    let t0 = Instant::now();
    let (phi, panel, fcfg, prior) = c5_model();
    let draws = 10_000;
    let thin = 20;
    let burn = 5_000;

    let cfg = ChainConfig {
        iterations: burn + draws * thin,
        burn_in: burn,
        thin,
        n_particles: 100,
        seed: 31,
        filter: fcfg,
        keep_trajectories: false,
        trace_every: 1000,
        ..Default::default()
    };
    let out = run_chain(&panel, &prior, &phi, &cfg).unwrap();
    let pm: Vec<f64> = out.records.iter().map(|r| r.phi.real.beta).collect();

    // Random-walk Metropolis on beta with the exact likelihood.
    let (lo, hi) = (0.0, 10.0);
    let loglik = |beta: f64| {
        let mut x = phi.clone();
        x.real.beta = beta;
        exact_constant_variance_loglik(&x, &panel, &fcfg.init, fcfg.disc.dt)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut beta = phi.real.beta;
    let mut ll = loglik(beta);
    let mut exact = Vec::with_capacity(draws);
    for it in 0..burn + draws * thin {
        let prop = beta + 1.5 * rng.sample::<f64, _>(StandardNormal);
        if prop > lo && prop < hi {
            let llp = loglik(prop);
            if rng.random::<f64>().ln() < llp - ll {
                beta = prop;
                ll = llp;
            }
        }
        if it >= burn && (it - burn) % thin == 0 {
            exact.push(beta);
        }
    }
    let d = ks_statistic(&pm, &exact);
    let crit = ks_critical(0.01, pm.len(), exact.len());
    let (m1, _) = mean_sd(&pm);
    let (m2, _) = mean_sd(&exact);
    let elapsed = t0.elapsed();
    outcome(
        d < crit && pm.len() == draws && elapsed <= Duration::from_secs(600),
        format!(
            "KS D = {d:.4} vs 1% critical {crit:.4}; posterior means {m1:.3} (pmcmc) / {m2:.3} (exact); acceptance {:.3}",
            out.diagnostics.acceptance_rate
        ),
    )
}

/// One desk-scale calibration on a synthetic panel with a 5-day held-out
/// tail, shared by the recovery, acceptance-rate and predictive criteria.
fn c6_c7_c8() -> Vec<(&'static str, Outcome)> {
    let t0 = Instant::now();
    let phi = reference_model(10);
    let init_state = LatentState {
        v: 1.0,
        ..Default::default()
    };
    let disc = DiscretizationConfig::default();
    let (full, truth) = generate_panel(
        &phi,
        &ContractSchedule::default(),
        start_date(),
        105,
        &init_state,
        &disc,
        1,
    )
    .unwrap();
    let panel = full.head(100).unwrap();

    let mut prior = PriorSpec {
        boundary_nonattainment: false,
        ..Default::default()
    };
    prior.rho_xichi = ParamPrior::Fixed;
    prior.rho_vtheta = ParamPrior::Fixed;
    prior.omega = ParamPrior::Fixed;
    prior.obs_var.shared = true;
    let cfg = ChainConfig {
        iterations: 20_000,
        burn_in: 5_000,
        n_particles: 200,
        seed: 7,
        ..Default::default()
    };
    let out = run_chain(&panel, &prior, &phi, &cfg).unwrap();
    let elapsed = t0.elapsed();
    let summary = summarize_chain(&out.records, &panel.dates).unwrap();

    let truth_flat = phi.flatten();
    let checked = [
        "beta", "mu_xi", "kappa_xi", "mu_v", "kappa_v", "sigma_chi", "sigma_xi", "sigma_v", "obs_var_1",
    ];
    let mut misses = Vec::new();
    let mut premia_misses = Vec::new();
    for (k, p) in summary.parameters.iter().enumerate() {
        let inside = truth_flat[k] >= p.lo && truth_flat[k] <= p.hi;
        if inside {
            continue;
        }
        let miss = format!("{} {:.3} not in [{:.3}, {:.3}]", p.name, truth_flat[k], p.lo, p.hi);
        if checked.contains(&p.name.as_str()) {
            misses.push(miss);
        } else if p.name.starts_with("lambda") {
            premia_misses.push(miss);
        }
    }
    let covered = (0..panel.n_days())
        .filter(|&t| {
            let x = truth.state(t).log_spot_ex_season();
            let b = summary.factors[t].log_spot;
            x >= b.lo && x <= b.hi
        })
        .count();
    let c6 = outcome(
        misses.is_empty() && covered * 100 >= 85 * panel.n_days() && elapsed <= Duration::from_secs(3600),
        format!(
            "{} of 9 parameters inside their 95% interval{}; log-spot coverage {covered}/{}; premia outside: {}; {:.0}s",
            9 - misses.len(),
            if misses.is_empty() { String::new() } else { format!(" (missed: {})", misses.join(", ")) },
            panel.n_days(),
            if premia_misses.is_empty() { "none".to_string() } else { premia_misses.join(", ") },
            elapsed.as_secs_f64()
        ),
    );

    let rate = out.diagnostics.acceptance_rate;
    let file = SummaryFile::new("calibrate", &out.records, &summary, Some(&out.diagnostics));
    let json: serde_json::Value = serde_json::to_value(&file).unwrap();
    let reported = json["acceptance_rate"].as_f64();
    let c7 = outcome(
        (0.05..=0.6).contains(&rate) && reported == Some(rate),
        format!("acceptance rate {rate:.4}, summary field {reported:?}"),
    );

    let curve = predictive_futures(&out.records, &panel, 5, &disc, 3).unwrap();
    let (mut n, mut inside) = (0, 0);
    for t in 100..105 {
        for (k, y) in full.observations(t) {
            let p = curve.get(t, k).expect("held-out point");
            n += 1;
            inside += (y >= p.lo && y <= p.hi) as usize;
        }
    }
    let c8 = outcome(
        n > 0 && inside * 100 >= 90 * n,
        format!("{inside}/{n} held-out log prices inside the 95% band"),
    );
    vec![("C6", c6), ("C7", c7), ("C8", c8)]
}

fn sha_dir(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let bytes = std::fs::read(e.path()).unwrap();
            let hash = Sha256::digest(&bytes);
            let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
            (e.file_name().to_string_lossy().into_owned(), hex)
        })
        .collect();
    out.sort();
    out
}

fn c9_cli_hashes() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_commodity-pmcmc");
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        "[simulate]\ndays = 30\n[chain]\niterations = 60\nburn_in = 20\nn_particles = 20\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let run = |args: &[&str], out: &Path| {
        let status = Command::new(bin)
            .args(args)
            .args(["--seed", "11", "--config", cfg, "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    };
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for rep in 0..2 {
        let base = root.join(format!("rep{rep}"));
        let sim = base.join("simulate");
        run(&["simulate"], &sim);
        let panel = sim.join("panel.csv");
        let panel = panel.to_str().unwrap();
        let cal = base.join("calibrate");
        run(&["calibrate", "--panel", panel], &cal);
        let cal_s = cal.to_str().unwrap();
        run(&["filter", "--panel", panel, "--particles", "50"], &base.join("filter"));
        run(&["predict", "--panel", panel, "--chain-dir", cal_s, "--horizon", "5"], &base.join("predict"));
        run(&["summarize", "--chain-dir", cal_s], &base.join("summarize"));
    }
    for cmd in ["simulate", "calibrate", "filter", "predict", "summarize"] {
        let a = sha_dir(&root.join("rep0").join(cmd));
        let b = sha_dir(&root.join("rep1").join(cmd));
        compared += a.len();
        if a != b || a.is_empty() {
            mismatched.push(cmd);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{compared} files hashed across 5 commands; mismatched: {mismatched:?}"),
    )
}
