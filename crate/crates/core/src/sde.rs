//! Time discretization of the latent factors.
//!
//! `(chi, xi)` use an Euler step with correlated Gaussian increments.
//! `(theta, V)` use a strong order-1 Milstein step driven by two independent
//! Wiener components `W1` (theta) and `W2` (the part of `V` orthogonal to
//! theta). The mixed iterated integrals `J(1,2)` and `J(2,1)` are sampled from
//! a Fourier series truncated after `p` terms plus a tail correction with
//! variance `rho_p`. Kloeden and Platen suggest `p >= K / dt`.
//!
//! RNG draw order within one step is fixed:
//! `n_chi, n_xi, n_theta, n_v, mu_1p, mu_2p`, then for `r = 1..=p`:
//! `psi_1r, psi_2r, nu_1r, nu_2r`.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentState, RealParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Step size in days.
    pub dt: f64,
    /// Truncation order of the iterated-integral series.
    pub p: usize,
    /// Lower bound applied to the variance after each step.
    pub v_floor: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            p: 100,
            v_floor: 0.0,
        }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.v_floor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "v_floor must be nonnegative, got {}",
                self.v_floor
            )));
        }
        Ok(())
    }
}

/// Variance of the tail left out by a `p`-term truncation:
/// `1/12 - (1 / 2 pi^2) sum_{r=1}^{p} 1/r^2`.
pub fn rho_p(p: usize) -> f64 {
    let s: f64 = (1..=p).map(|r| 1.0 / (r as f64 * r as f64)).sum();
    1.0 / 12.0 - s / (2.0 * PI * PI)
}

/// All standard normals consumed by one step of the four-factor scheme.
///
/// `zeta1` is identified with `n_theta` and `zeta2` with `n_v`, so the
/// Milstein corrections reuse the diffusion increments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepShocks {
    pub n_chi: f64,
    pub n_xi: f64,
    pub n_theta: f64,
    pub n_v: f64,
    pub mu1p: f64,
    pub mu2p: f64,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
}

impl StepShocks {
    pub fn zeros(p: usize) -> Self {
        Self {
            psi1: vec![0.0; p],
            psi2: vec![0.0; p],
            nu1: vec![0.0; p],
            nu2: vec![0.0; p],
            ..Default::default()
        }
    }

    pub fn zeta1(&self) -> f64 {
        self.n_theta
    }

    pub fn zeta2(&self) -> f64 {
        self.n_v
    }

    /// Fills every entry from `rng`, resizing the series to `p` terms.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R, p: usize) {
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        self.n_chi = z();
        self.n_xi = z();
        self.n_theta = z();
        self.n_v = z();
        self.mu1p = z();
        self.mu2p = z();
        for v in [&mut self.psi1, &mut self.psi2, &mut self.nu1, &mut self.nu2] {
            v.resize(p, 0.0);
        }
        for r in 0..p {
            self.psi1[r] = z();
            self.psi2[r] = z();
            self.nu1[r] = z();
            self.nu2[r] = z();
        }
    }
}

/// `(J(1,2), J(2,1))` over one step, both evaluated on the same shocks.
pub fn levy_area_pair(dt: f64, shocks: &StepShocks, p: usize) -> Result<(f64, f64)> {
    let lens = [
        shocks.psi1.len(),
        shocks.psi2.len(),
        shocks.nu1.len(),
        shocks.nu2.len(),
    ];
    if lens.iter().any(|&l| l != p) {
        return Err(Error::DimensionMismatch(format!(
            "truncation order {p} but series lengths {lens:?}"
        )));
    }
    let (z1, z2) = (shocks.zeta1(), shocks.zeta2());
    let series: f64 = (0..p)
        .map(|i| {
            let r = (i + 1) as f64;
            (shocks.psi1[i] * (SQRT_2 * z2 + shocks.nu2[i])
                - shocks.psi2[i] * (SQRT_2 * z1 + shocks.nu1[i]))
                / r
        })
        .sum();
    Ok(combine_areas(dt, p, z1, z2, shocks.mu1p, shocks.mu2p, series))
}

fn combine_areas(dt: f64, p: usize, z1: f64, z2: f64, mu1: f64, mu2: f64, series: f64) -> (f64, f64) {
    let symmetric = 0.5 * dt * z1 * z2;
    let antisymmetric = dt * rho_p(p).sqrt() * (mu1 * z2 - mu2 * z1) + dt / (2.0 * PI) * series;
    (symmetric + antisymmetric, symmetric - antisymmetric)
}

/// Shocks of the `(theta, V)` block only, with the iterated integrals
/// already reduced. Drawn in the same order as the tail of [`StepShocks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolShocks {
    pub n_theta: f64,
    pub n_v: f64,
    pub j12: f64,
    pub j21: f64,
}

impl VolShocks {
    /// Streams the draws without materialising the series. `sqrt_rho_p`
    /// must be `rho_p(p).sqrt()`; callers hoist it out of their loops.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, dt: f64, p: usize, sqrt_rho_p: f64) -> Self {
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        let n_theta = z();
        let n_v = z();
        let mu1 = z();
        let mu2 = z();
        let (a1, a2) = (SQRT_2 * n_v, SQRT_2 * n_theta);
        let mut series = 0.0;
        for i in 0..p {
            let psi1 = z();
            let psi2 = z();
            let nu1 = z();
            let nu2 = z();
            series += (psi1 * (a1 + nu2) - psi2 * (a2 + nu1)) / (i + 1) as f64;
        }
        let symmetric = 0.5 * dt * n_theta * n_v;
        let antisymmetric = dt * sqrt_rho_p * (mu1 * n_v - mu2 * n_theta) + dt / (2.0 * PI) * series;
        Self {
            n_theta,
            n_v,
            j12: symmetric + antisymmetric,
            j21: symmetric - antisymmetric,
        }
    }
}

/// Euler step for the long-short factors. `(n_chi, n_xi)` are rotated by
/// the lower Cholesky factor of the 2x2 correlation matrix.
pub fn euler_step_long_short(
    chi: f64,
    xi: f64,
    r: &RealParams,
    cfg: &DiscretizationConfig,
    shocks: &StepShocks,
) -> (f64, f64) {
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let z_chi = shocks.n_chi;
    let z_xi = r.rho_xichi * shocks.n_chi + (1.0 - r.rho_xichi * r.rho_xichi).sqrt() * shocks.n_xi;
    (
        (1.0 - r.beta * dt) * chi + r.sigma_chi * sq * z_chi,
        r.mu_xi * dt + (1.0 - r.kappa_xi * dt) * xi + r.sigma_xi * sq * z_xi,
    )
}

/// Milstein step for `(theta, V)` given the diffusion normals and the two
/// mixed iterated integrals. The result is floored at `cfg.v_floor`.
#[allow(clippy::too_many_arguments)]
pub fn milstein_step_vol_with_areas(
    theta: f64,
    v: f64,
    r: &RealParams,
    cfg: &DiscretizationConfig,
    n_theta: f64,
    n_v: f64,
    j12: f64,
    j21: f64,
) -> (f64, f64) {
    let dt = cfg.dt;
    let s = r.sigma_v;
    let rho = r.rho_vtheta;
    let orth = (1.0 - rho * rho).max(0.0).sqrt();
    let root = (v.max(0.0) * dt).sqrt();
    let i11 = dt * n_theta * n_theta - dt;
    let i22 = dt * n_v * n_v - dt;

    let theta_next = theta + root * n_theta + 0.25 * s * rho * i11 + 0.5 * s * orth * j21;
    let v_next = v
        + (r.mu_v - r.kappa_v * v) * dt
        + s * rho * root * n_theta
        + s * orth * root * n_v
        + 0.25 * s * s * rho * rho * i11
        + 0.5 * s * s * rho * orth * j12
        + 0.5 * s * s * rho * orth * j21
        + 0.25 * s * s * (1.0 - rho * rho) * i22;
    (theta_next, v_next.max(cfg.v_floor))
}

pub fn milstein_step_vol(
    theta: f64,
    v: f64,
    r: &RealParams,
    cfg: &DiscretizationConfig,
    shocks: &StepShocks,
) -> Result<(f64, f64)> {
    let (j12, j21) = levy_area_pair(cfg.dt, shocks, cfg.p)?;
    Ok(milstein_step_vol_with_areas(
        theta,
        v,
        r,
        cfg,
        shocks.n_theta,
        shocks.n_v,
        j12,
        j21,
    ))
}

/// Day-indexed trajectories of the four latent factors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentPath {
    pub chi: Vec<f64>,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
}

impl LatentPath {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            chi: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    pub fn push(&mut self, s: LatentState) {
        self.chi.push(s.chi);
        self.xi.push(s.xi);
        self.theta.push(s.theta);
        self.v.push(s.v);
    }

    pub fn state(&self, t: usize) -> LatentState {
        LatentState {
            chi: self.chi[t],
            xi: self.xi[t],
            theta: self.theta[t],
            v: self.v[t],
        }
    }

    pub fn last(&self) -> Option<LatentState> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }
}

/// Advances `state` by one step using freshly drawn shocks.
pub fn step_latent<R: Rng + ?Sized>(
    state: &LatentState,
    r: &RealParams,
    cfg: &DiscretizationConfig,
    shocks: &mut StepShocks,
    rng: &mut R,
) -> LatentState {
    shocks.draw(rng, cfg.p);
    let (chi, xi) = euler_step_long_short(state.chi, state.xi, r, cfg, shocks);
    let (theta, v) = milstein_step_vol(state.theta, state.v, r, cfg, shocks)
        .expect("shock series sized by draw");
    LatentState { chi, xi, theta, v }
}

/// Simulates `days` steps from `init` (which is not included in the output).
pub fn simulate_latent_path(
    r: &RealParams,
    init: &LatentState,
    days: usize,
    cfg: &DiscretizationConfig,
    seed: u64,
) -> LatentPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_latent_path_with(r, init, days, cfg, &mut rng)
}

pub fn simulate_latent_path_with<R: Rng + ?Sized>(
    r: &RealParams,
    init: &LatentState,
    days: usize,
    cfg: &DiscretizationConfig,
    rng: &mut R,
) -> LatentPath {
    let mut path = LatentPath::with_capacity(days);
    let mut shocks = StepShocks::zeros(cfg.p);
    let mut s = *init;
    for _ in 0..days {
        s = step_latent(&s, r, cfg, &mut shocks, rng);
        path.push(s);
    }
    path
}
