//! Adaptive random-walk proposal: a two-component Gaussian mixture whose
//! main component uses the running covariance of the chain.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Running mean and covariance of the chain states seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub count: usize,
}

impl AdaptiveState {
    /// Starts the recursion at `mu0` with a zero covariance.
    pub fn new(mu0: &[f64]) -> Self {
        let d = mu0.len();
        Self {
            mu: DVector::from_column_slice(mu0),
            sigma: DMatrix::zeros(d, d),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `mu_{j+1} = mu_j + (x - mu_j)/(j+1)`,
    /// `Sigma_{j+1} = Sigma_j + ((x - mu_j)(x - mu_j)' - Sigma_j)/(j+1)`.
    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "adaptive state dimension");
        let j1 = (self.count + 1) as f64;
        let diff = DVector::from_column_slice(x) - &self.mu;
        self.sigma += (&diff * diff.transpose() - &self.sigma) / j1;
        self.mu += diff / j1;
        self.count += 1;
    }
}

pub const ADAPTIVE_SCALE: f64 = 2.38;
pub const FIXED_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    /// Whether the adaptive component was used.
    pub adaptive: bool,
}

/// With probability `w1` draws from `N(x, 2.38^2/d Sigma_j)`, otherwise from
/// `N(x, 0.1^2/d I)`. The adaptive component is skipped until `2d` states
/// have been seen or when `Sigma_j` has no Cholesky factor.
pub fn adaptive_propose<R: Rng + ?Sized>(
    current: &[f64],
    ad: &AdaptiveState,
    w1: f64,
    rng: &mut R,
) -> Proposal {
    let d = current.len();
    let pick = rng.random::<f64>() < w1;
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DVector::from_column_slice(current);
    if pick && ad.count >= 2 * d {
        let cov = &ad.sigma * (ADAPTIVE_SCALE * ADAPTIVE_SCALE / d as f64);
        if let Some(ch) = cov.cholesky() {
            return Proposal {
                x: (x + ch.l() * z).as_slice().to_vec(),
                adaptive: true,
            };
        }
    }
    Proposal {
        x: (x + z * (FIXED_SCALE / (d as f64).sqrt())).as_slice().to_vec(),
        adaptive: false,
    }
}
