//! Rao-Blackwellised SIR particle filter.
//!
//! Each particle carries a sampled `(theta, V)` trajectory and the Kalman
//! moments of `(chi, xi)` conditional on it. Particles are mutated from the
//! Milstein transition, so the incremental weight is the Kalman predictive
//! density alone. Resampling is stratified and triggered when the effective
//! sample size drops below `ess_threshold * N`.
//!
//! Randomness comes from one ChaCha8 key per filter seed with a separate
//! stream per (day, particle), so results do not depend on evaluation order.

pub mod kalman;
pub mod resample;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::model::{ContractSpec, LatentState, ModelParams};
use crate::panel::FuturesPanel;
use crate::sde::{milstein_step_vol_with_areas, rho_p, DiscretizationConfig, LatentPath, VolShocks};

pub use kalman::{
    assemble_ssm, kalman_predict, kalman_step, kalman_update, observation_rows, transition,
    KalmanOutput, LinearGaussianSpec,
};
pub use resample::{ess, normalize_log_weights, sample_index, stratified_resample, weighted_quantile};

/// Gaussian law of the state before the first observation, as two
/// independent blocks `(chi, xi)` and `(theta, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialDistribution {
    /// `(chi, xi, theta, v)`.
    pub mean: [f64; 4],
    pub cov_long_short: [[f64; 2]; 2],
    pub cov_vol: [[f64; 2]; 2],
}

impl Default for InitialDistribution {
    fn default() -> Self {
        Self {
            mean: [0.0; 4],
            cov_long_short: [[1.0, 0.0], [0.0, 1.0]],
            cov_vol: [[1.0, 0.0], [0.0, 1.0]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub disc: DiscretizationConfig,
    pub ess_threshold: f64,
    pub init: InitialDistribution,
    /// Compute per-day cloud summaries (not needed inside MCMC).
    pub summaries: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            disc: DiscretizationConfig::default(),
            ess_threshold: 0.8,
            init: InitialDistribution::default(),
            summaries: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Weighted mean and central 95% interval of each factor on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudSummary {
    pub chi: Band,
    pub xi: Band,
    pub theta: Band,
    pub v: Band,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub log_marginal_likelihood: f64,
    /// Per-day factors of the log-likelihood estimate.
    pub log_likelihood_increments: Vec<f64>,
    pub sampled_trajectory: LatentPath,
    pub cloud_summaries: Option<Vec<CloudSummary>>,
    pub resample_count: usize,
}

struct DayObs {
    h: Vec<Vector2<f64>>,
    d: Vec<f64>,
    r: Vec<f64>,
    y: Vec<f64>,
}

fn day_observations(phi: &ModelParams, panel: &FuturesPanel) -> Result<Vec<DayObs>> {
    let rn = phi.risk_neutral()?;
    (0..panel.n_days())
        .map(|t| {
            let (idx, y): (Vec<usize>, Vec<f64>) = panel.observations(t).unzip();
            let contracts: Vec<ContractSpec> = idx.iter().map(|&k| panel.contracts[k]).collect();
            let (h, d) = observation_rows(&rn, &phi.seasonal, &contracts, panel.dates[t])?;
            let r = idx.iter().map(|&k| phi.real.obs_var[k]).collect();
            Ok(DayObs { h, d, r, y })
        })
        .collect()
}

/// Lower Cholesky factor of a 2x2 PSD matrix; zero variances are allowed.
fn chol2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let l00 = m[(0, 0)].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { m[(1, 0)] / l00 } else { 0.0 };
    let l11 = (m[(1, 1)] - l10 * l10).max(0.0).sqrt();
    Matrix2::new(l00, 0.0, l10, l11)
}

fn to_matrix(a: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}

fn reset(rng: &mut ChaCha8Rng, stream: u64) {
    rng.set_stream(stream);
    rng.set_word_pos(0);
}

const RESAMPLE_STREAM: u64 = 1 << 63;
const TRAJECTORY_STREAM: u64 = u64::MAX;

pub fn rb_sir_filter(
    phi: &ModelParams,
    panel: &FuturesPanel,
    n_particles: usize,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<FilterResult> {
    if n_particles == 0 || n_particles > u32::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "particle count {n_particles} out of range"
        )));
    }
    if panel.n_contracts() != phi.n_contracts() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} contracts, parameters have {} observation variances",
            panel.n_contracts(),
            phi.n_contracts()
        )));
    }
    cfg.disc.validate()?;
    let obs = day_observations(phi, panel)?;
    let real = &phi.real;
    let disc = &cfg.disc;
    let (a, c, q) = transition(real, disc.dt);
    let sqrt_rho = rho_p(disc.p).sqrt();
    let n = n_particles;
    let days = panel.n_days();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let init = &cfg.init;
    let l_vol = chol2(&to_matrix(&init.cov_vol));
    let m0 = Vector2::new(init.mean[0], init.mean[1]);
    let p0 = to_matrix(&init.cov_long_short);
    let mut prev_theta = vec![0.0; n];
    let mut prev_v = vec![0.0; n];
    for i in 0..n {
        reset(&mut rng, i as u64);
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let tv = Vector2::new(init.mean[2], init.mean[3]) + l_vol * z;
        prev_theta[i] = tv[0];
        prev_v[i] = tv[1].max(disc.v_floor);
    }
    let mut prev_m = vec![m0; n];
    let mut prev_p = vec![p0; n];

    let mut hist_theta = vec![0.0; days * n];
    let mut hist_v = vec![0.0; days * n];
    let mut hist_m = vec![Vector2::zeros(); days * n];
    let mut hist_p = vec![Matrix2::zeros(); days * n];
    let mut parent = vec![0u32; days * n];

    let mut anc: Vec<usize> = (0..n).collect();
    let mut w_bar = vec![1.0 / n as f64; n];
    let mut log_inc = vec![0.0; n];
    let mut w_new = Vec::with_capacity(n);
    let mut log_lik = 0.0;
    let mut increments = Vec::with_capacity(days);
    let mut summaries = cfg.summaries.then(|| Vec::with_capacity(days));
    let mut resample_count = 0;
    let mut idx = Vec::with_capacity(n);

    for t in 0..days {
        let day = &obs[t];
        let base = t * n;
        for i in 0..n {
            let j = anc[i];
            parent[base + i] = j as u32;
            reset(&mut rng, ((t as u64 + 1) << 32) | i as u64);
            let s = VolShocks::draw(&mut rng, disc.dt, disc.p, sqrt_rho);
            let (theta, v) = milstein_step_vol_with_areas(
                prev_theta[j], prev_v[j], real, disc, s.n_theta, s.n_v, s.j12, s.j21,
            );
            let (mp, pp) = kalman_predict(&prev_m[j], &prev_p[j], &a, &c, &q);
            let (m, p, g) = match kalman_update(&mp, &pp, &day.h, &day.d, &day.r, theta, &day.y) {
                Ok(out) => out,
                Err(Error::DegenerateInnovation) => (mp, pp, f64::NEG_INFINITY),
                Err(e) => return Err(e),
            };
            hist_theta[base + i] = theta;
            hist_v[base + i] = v;
            hist_m[base + i] = m;
            hist_p[base + i] = p;
            log_inc[i] = if g.is_nan() {
                f64::NEG_INFINITY
            } else {
                w_bar[i].ln() + g
            };
        }
        let lse = normalize_log_weights(&log_inc, &mut w_new)
            .ok_or(Error::FilterCollapse { day: t })?;
        log_lik += lse;
        increments.push(lse);

        let range = base..base + n;
        if let Some(out) = summaries.as_mut() {
            out.push(cloud_summary(
                &w_new,
                &hist_m[range.clone()],
                &hist_p[range.clone()],
                &hist_theta[range.clone()],
                &hist_v[range.clone()],
            ));
        }
        prev_theta.copy_from_slice(&hist_theta[range.clone()]);
        prev_v.copy_from_slice(&hist_v[range.clone()]);
        prev_m.copy_from_slice(&hist_m[range.clone()]);
        prev_p.copy_from_slice(&hist_p[range]);

        if t + 1 < days && ess(&w_new) < cfg.ess_threshold * n as f64 {
            reset(&mut rng, RESAMPLE_STREAM | t as u64);
            resample::stratified_resample_into(&w_new, n, &mut rng, &mut idx);
            anc.copy_from_slice(&idx);
            w_bar.fill(1.0 / n as f64);
            resample_count += 1;
        } else {
            for (i, a) in anc.iter_mut().enumerate() {
                *a = i;
            }
            w_bar.copy_from_slice(&w_new);
        }
    }

    reset(&mut rng, TRAJECTORY_STREAM);
    let mut slots = vec![0usize; days];
    slots[days - 1] = sample_index(&w_new, rng.random::<f64>());
    for t in (1..days).rev() {
        slots[t - 1] = parent[t * n + slots[t]] as usize;
    }
    let trajectory = backward_sample(&slots, n, &hist_theta, &hist_v, &hist_m, &hist_p, &a, &c, &q, &mut rng);

    Ok(FilterResult {
        log_marginal_likelihood: log_lik,
        log_likelihood_increments: increments,
        sampled_trajectory: trajectory,
        cloud_summaries: summaries,
        resample_count,
    })
}

/// Draws `(chi, xi)_{1:T}` along one genealogy by backward sampling from the
/// stored filtered moments, then attaches the genealogy's `(theta, V)`.
#[allow(clippy::too_many_arguments)]
fn backward_sample(
    slots: &[usize],
    n: usize,
    hist_theta: &[f64],
    hist_v: &[f64],
    hist_m: &[Vector2<f64>],
    hist_p: &[Matrix2<f64>],
    a: &Matrix2<f64>,
    c: &Vector2<f64>,
    q: &Matrix2<f64>,
    rng: &mut ChaCha8Rng,
) -> LatentPath {
    let days = slots.len();
    let mut z = || Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let mut x = vec![Vector2::zeros(); days];
    let k = (days - 1) * n + slots[days - 1];
    x[days - 1] = hist_m[k] + chol2(&hist_p[k]) * z();
    for t in (0..days - 1).rev() {
        let k = t * n + slots[t];
        let (m, p) = (hist_m[k], hist_p[k]);
        let (mp, pp) = kalman_predict(&m, &p, a, c, q);
        let pp_inv = pp
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
            .unwrap_or_else(|| pp.pseudo_inverse(1e-14).unwrap_or_else(|_| Matrix2::zeros()));
        let gain = p * a.transpose() * pp_inv;
        let mean = m + gain * (x[t + 1] - mp);
        let cov = p - gain * a * p;
        let cov = 0.5 * (cov + cov.transpose());
        x[t] = mean + chol2(&cov) * z();
    }
    let mut path = LatentPath::with_capacity(days);
    for t in 0..days {
        let k = t * n + slots[t];
        path.push(LatentState {
            chi: x[t][0],
            xi: x[t][1],
            theta: hist_theta[k],
            v: hist_v[k],
        });
    }
    path
}

fn cloud_summary(
    w: &[f64],
    m: &[Vector2<f64>],
    p: &[Matrix2<f64>],
    theta: &[f64],
    v: &[f64],
) -> CloudSummary {
    let mixture = |k: usize| {
        let means: Vec<f64> = m.iter().map(|x| x[k]).collect();
        let sds: Vec<f64> = p.iter().map(|x| x[(k, k)].max(0.0).sqrt()).collect();
        Band {
            mean: dot(w, &means),
            lo: mixture_quantile(w, &means, &sds, 0.025),
            hi: mixture_quantile(w, &means, &sds, 0.975),
        }
    };
    let empirical = |x: &[f64]| Band {
        mean: dot(w, x),
        lo: weighted_quantile(x, w, 0.025),
        hi: weighted_quantile(x, w, 0.975),
    };
    CloudSummary {
        chi: mixture(0),
        xi: mixture(1),
        theta: empirical(theta),
        v: empirical(v),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quantile of a Gaussian mixture by bisection on its CDF.
pub fn mixture_quantile(w: &[f64], means: &[f64], sds: &[f64], q: f64) -> f64 {
    let cdf = |x: f64| -> f64 {
        w.iter()
            .zip(means.iter().zip(sds))
            .map(|(&wi, (&mu, &sd))| {
                let c = if sd > 0.0 {
                    0.5 * (1.0 + erf((x - mu) / (sd * std::f64::consts::SQRT_2)))
                } else if x >= mu {
                    1.0
                } else {
                    0.0
                };
                wi * c
            })
            .sum()
    };
    let lo0 = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m - 10.0 * s)
        .fold(f64::INFINITY, f64::min);
    let hi0 = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m + 10.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
