//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use commodity_pmcmc::config::reference_model;
use commodity_pmcmc::filter::InitialDistribution;
use commodity_pmcmc::model::{b_coefficients, seasonal_component, ModelParams};
use commodity_pmcmc::panel::FuturesPanel;

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

/// Reference parameters with constant variance: `sigma_v = 0`, `mu_v` and
/// `kappa_v` zero, so `V` stays at its initial value and `theta` is a
/// Gaussian random walk.
pub fn constant_variance_model(n_contracts: usize) -> ModelParams {
    let mut phi = reference_model(n_contracts);
    phi.real.sigma_v = 0.0;
    phi.real.mu_v = 0.0;
    phi.real.kappa_v = 0.0;
    phi.real.rho_vtheta = 0.0;
    phi
}

/// `log N(y; mean, cov)` through a dense Cholesky factorisation.
pub fn gaussian_log_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let ch = cov.clone().cholesky().expect("covariance must be positive definite");
    let e = y - mean;
    let sol = ch.solve(&e);
    let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + e.dot(&sol))
}

/// Exact log-likelihood of the panel when `sigma_v = 0`.
///
/// The state `(chi, xi, theta)` is linear-Gaussian with a deterministic
/// variance path, so one batch Kalman filter over all three factors gives
/// the likelihood. The initial law matches `init` with a degenerate `V`.
pub fn exact_constant_variance_loglik(
    phi: &ModelParams,
    panel: &FuturesPanel,
    init: &InitialDistribution,
    dt: f64,
) -> f64 {
    let r = &phi.real;
    assert_eq!(r.sigma_v, 0.0);
    let rn = phi.risk_neutral().unwrap();
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[1.0 - r.beta * dt, 0.0, 0.0, 0.0, 1.0 - r.kappa_xi * dt, 0.0, 0.0, 0.0, 1.0],
    );
    let c = DVector::from_row_slice(&[0.0, r.mu_xi * dt, 0.0]);
    let cross = r.rho_xichi * r.sigma_chi * r.sigma_xi * dt;

    let mut m = DVector::from_row_slice(&[init.mean[0], init.mean[1], init.mean[2]]);
    let mut p = DMatrix::zeros(3, 3);
    for i in 0..2 {
        for j in 0..2 {
            p[(i, j)] = init.cov_long_short[i][j];
        }
    }
    p[(2, 2)] = init.cov_vol[0][0];
    let mut v = init.mean[3].max(0.0);

    let mut total = 0.0;
    for t in 0..panel.n_days() {
        let q = DMatrix::from_row_slice(
            3,
            3,
            &[
                r.sigma_chi * r.sigma_chi * dt,
                cross,
                0.0,
                cross,
                r.sigma_xi * r.sigma_xi * dt,
                0.0,
                0.0,
                0.0,
                v * dt,
            ],
        );
        m = &a * &m + &c;
        p = &a * &p * a.transpose() + q;
        v = (v + (r.mu_v - r.kappa_v * v) * dt).max(0.0);

        let obs: Vec<(usize, f64)> = panel.observations(t).collect();
        if obs.is_empty() {
            continue;
        }
        let date = panel.dates[t];
        let k = obs.len();
        let mut h = DMatrix::zeros(k, 3);
        let mut d = DVector::zeros(k);
        let mut y = DVector::zeros(k);
        let mut rr = DMatrix::zeros(k, k);
        for (row, &(n, val)) in obs.iter().enumerate() {
            let ct = panel.contracts[n];
            let b = b_coefficients(ct.tau(date), &rn).unwrap();
            h[(row, 0)] = b.b2;
            h[(row, 1)] = b.b1;
            h[(row, 2)] = b.b3;
            d[row] = b.b0 + seasonal_component(ct.maturity, &phi.seasonal);
            y[row] = val;
            rr[(row, row)] = r.obs_var[n];
        }
        let s = &h * &p * h.transpose() + rr;
        let pred = &h * &m + &d;
        total += gaussian_log_density(&y, &pred, &s);
        let s_inv = s.try_inverse().unwrap();
        let gain = &p * h.transpose() * s_inv;
        m = &m + &gain * (y - pred);
        p = (DMatrix::identity(3, 3) - &gain * &h) * &p;
        p = (&p + p.transpose()) * 0.5;
    }
    total
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
