//! Kalman recursion for the conditionally linear-Gaussian block `(chi, xi)`.
//!
//! R is diagonal, so the measurement update is a sequence of scalar updates,
//! each in Joseph form. Their summed log-densities equal the joint
//! predictive log-density by the chain rule.

use nalgebra::{Matrix2, Vector2};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::model::{
    b_coefficients, seasonal_component, ContractSpec, RealParams, RiskNeutralParams,
    SeasonalWeights,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One day's state-space matrices. State order is `(chi, xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSpec {
    pub a: Matrix2<f64>,
    pub c: Vector2<f64>,
    pub q: Matrix2<f64>,
    /// Observation loadings, one row per contract.
    pub h: Vec<Vector2<f64>>,
    pub d: Vec<f64>,
    /// Diagonal of R.
    pub r: Vec<f64>,
}

impl LinearGaussianSpec {
    /// Keeps only the listed observation rows.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            a: self.a,
            c: self.c,
            q: self.q,
            h: rows.iter().map(|&i| self.h[i]).collect(),
            d: rows.iter().map(|&i| self.d[i]).collect(),
            r: rows.iter().map(|&i| self.r[i]).collect(),
        }
    }
}

pub fn transition(r: &RealParams, dt: f64) -> (Matrix2<f64>, Vector2<f64>, Matrix2<f64>) {
    let a = Matrix2::new(1.0 - r.beta * dt, 0.0, 0.0, 1.0 - r.kappa_xi * dt);
    let c = Vector2::new(0.0, r.mu_xi * dt);
    let cross = r.rho_xichi * r.sigma_chi * r.sigma_xi;
    let q = Matrix2::new(
        r.sigma_chi * r.sigma_chi,
        cross,
        cross,
        r.sigma_xi * r.sigma_xi,
    ) * dt;
    (a, c, q)
}

/// Matrices for observation date `date` given the current `theta`.
/// `contracts` pairs one-to-one with `r.obs_var`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_ssm(
    r: &RealParams,
    rn: &RiskNeutralParams,
    w: &SeasonalWeights,
    contracts: &[ContractSpec],
    date: NaiveDate,
    theta_t: f64,
    dt: f64,
) -> Result<LinearGaussianSpec> {
    if contracts.len() != r.obs_var.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} contracts but {} observation variances",
            contracts.len(),
            r.obs_var.len()
        )));
    }
    let (a, c, q) = transition(r, dt);
    let (h, mut d) = observation_rows(rn, w, contracts, date)?;
    for dn in &mut d {
        *dn += theta_t;
    }
    Ok(LinearGaussianSpec {
        a,
        c,
        q,
        h,
        d,
        r: r.obs_var.clone(),
    })
}

/// Loadings `(b2, b1)` and offsets `f(T) + b0` excluding theta, which enters
/// every row with unit loading.
pub fn observation_rows(
    rn: &RiskNeutralParams,
    w: &SeasonalWeights,
    contracts: &[ContractSpec],
    date: NaiveDate,
) -> Result<(Vec<Vector2<f64>>, Vec<f64>)> {
    let mut h = Vec::with_capacity(contracts.len());
    let mut d = Vec::with_capacity(contracts.len());
    for ct in contracts {
        let b = b_coefficients(ct.tau(date), rn)?;
        h.push(Vector2::new(b.b2, b.b1));
        d.push(seasonal_component(ct.maturity, w) + b.b0);
    }
    Ok((h, d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanOutput {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub mean_pred: Vector2<f64>,
    pub cov_pred: Matrix2<f64>,
    pub log_predictive: f64,
}

pub fn kalman_predict(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    a: &Matrix2<f64>,
    c: &Vector2<f64>,
    q: &Matrix2<f64>,
) -> (Vector2<f64>, Matrix2<f64>) {
    let m = a * mean + c;
    let p = a * cov * a.transpose() + q;
    (m, symmetrize(p))
}

/// Measurement update against `y`, with `offset` added to every entry of
/// `d`. Returns the posterior moments and the predictive log-density.
pub fn kalman_update(
    mean_pred: &Vector2<f64>,
    cov_pred: &Matrix2<f64>,
    h: &[Vector2<f64>],
    d: &[f64],
    r: &[f64],
    offset: f64,
    y: &[f64],
) -> Result<(Vector2<f64>, Matrix2<f64>, f64)> {
    if h.len() != y.len() || d.len() != y.len() || r.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "observation vector has {} entries, model has {}",
            y.len(),
            h.len()
        )));
    }
    let mut m = *mean_pred;
    let mut p = *cov_pred;
    let mut log_pred = 0.0;
    for n in 0..y.len() {
        let hn = h[n];
        let ph = p * hn;
        let mut s = hn.dot(&ph) + r[n];
        if !(s > 0.0) {
            s += 1e-12;
            if !(s > 0.0) {
                return Err(Error::DegenerateInnovation);
            }
        }
        let k = ph / s;
        let e = y[n] - hn.dot(&m) - d[n] - offset;
        m += k * e;
        let ikh = Matrix2::identity() - k * hn.transpose();
        p = symmetrize(ikh * p * ikh.transpose() + k * k.transpose() * r[n]);
        log_pred -= 0.5 * (LN_2PI + s.ln() + e * e / s);
    }
    Ok((m, p, log_pred))
}

pub fn kalman_step(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    spec: &LinearGaussianSpec,
    y: &[f64],
) -> Result<KalmanOutput> {
    let (mean_pred, cov_pred) = kalman_predict(mean, cov, &spec.a, &spec.c, &spec.q);
    let (m, p, log_predictive) =
        kalman_update(&mean_pred, &cov_pred, &spec.h, &spec.d, &spec.r, 0.0, y)?;
    Ok(KalmanOutput {
        mean: m,
        cov: p,
        mean_pred,
        cov_pred,
        log_predictive,
    })
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (p[(0, 1)] + p[(1, 0)]);
    Matrix2::new(p[(0, 0)], off, off, p[(1, 1)])
}
