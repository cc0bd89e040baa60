//! Priors over the static parameters and the layout of the sampled vector.
//!
//! Variance parameters carry their priors on the squared scale
//! (`sigma_chi^2`, ...). Positive parameters are sampled on the log scale;
//! [`ParameterLayout::log_jacobian`] supplies the change-of-variables term.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamPrior {
    Uniform { lo: f64, hi: f64 },
    /// Held at its initial value and not sampled.
    Fixed,
}

impl ParamPrior {
    fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    fn is_free(&self) -> bool {
        matches!(self, Self::Uniform { .. })
    }

    fn log_density(&self, x: f64) -> Option<f64> {
        match *self {
            Self::Uniform { lo, hi } => (x >= lo && x <= hi).then(|| -(hi - lo).ln()),
            Self::Fixed => Some(0.0),
        }
    }

    fn contains(&self, x: f64) -> bool {
        match *self {
            Self::Uniform { lo, hi } => x >= lo && x <= hi,
            Self::Fixed => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsVarPrior {
    pub shape: f64,
    pub scale: f64,
    /// One variance shared by every contract.
    pub shared: bool,
    pub fixed: bool,
}

impl Default for ObsVarPrior {
    fn default() -> Self {
        Self {
            shape: 1.0,
            scale: 1.0,
            shared: false,
            fixed: false,
        }
    }
}

impl ObsVarPrior {
    fn log_density(&self, x: f64) -> Option<f64> {
        (x > 0.0).then(|| {
            self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln()
                - self.scale / x
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    pub beta: ParamPrior,
    pub mu_xi: ParamPrior,
    pub kappa_xi: ParamPrior,
    pub mu_v: ParamPrior,
    pub kappa_v: ParamPrior,
    pub sigma2_chi: ParamPrior,
    pub sigma2_xi: ParamPrior,
    pub sigma2_v: ParamPrior,
    pub rho_xichi: ParamPrior,
    pub rho_vtheta: ParamPrior,
    pub obs_var: ObsVarPrior,
    /// Priors for `lambda0*, lambda1*, lambda2*, lambda3*, lambda6*, lambda7*`.
    pub premia: [ParamPrior; 6],
    /// Prior shared by the eleven seasonal weights.
    pub omega: ParamPrior,
    /// Require `2 mu_v >= 1` and `2 mu_v* >= 1`.
    pub boundary_nonattainment: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        let pos = ParamPrior::uniform(0.0, 10.0);
        Self {
            beta: pos,
            mu_xi: ParamPrior::uniform(-10.0, 10.0),
            kappa_xi: pos,
            mu_v: pos,
            kappa_v: pos,
            sigma2_chi: pos,
            sigma2_xi: pos,
            sigma2_v: pos,
            rho_xichi: ParamPrior::uniform(-1.0, 1.0),
            rho_vtheta: ParamPrior::uniform(-1.0, 1.0),
            obs_var: ObsVarPrior::default(),
            premia: [ParamPrior::uniform(-5.0, 5.0); 6],
            omega: ParamPrior::uniform(-10.0, 10.0),
            boundary_nonattainment: true,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let mut all = vec![
            self.beta,
            self.mu_xi,
            self.kappa_xi,
            self.mu_v,
            self.kappa_v,
            self.sigma2_chi,
            self.sigma2_xi,
            self.sigma2_v,
            self.rho_xichi,
            self.rho_vtheta,
            self.omega,
        ];
        all.extend_from_slice(&self.premia);
        for p in all {
            if let ParamPrior::Uniform { lo, hi } = p {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Config(format!("uniform prior needs lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        if !(self.obs_var.shape > 0.0 && self.obs_var.scale > 0.0) {
            return Err(Error::Config("inverse-gamma shape and scale must be positive".into()));
        }
        Ok(())
    }
}

/// Log prior density of `phi`, or `None` outside the support.
///
/// Real-world parameters and premia contribute their densities. The derived
/// risk-neutral drift parameters must lie in the support of their real
/// counterparts, with strictly positive `beta*` and `kappa_xi*`.
pub fn log_prior(phi: &ModelParams, spec: &PriorSpec) -> Option<f64> {
    let r = &phi.real;
    let mut lp = 0.0;
    let scalar = [
        (spec.beta, r.beta),
        (spec.mu_xi, r.mu_xi),
        (spec.kappa_xi, r.kappa_xi),
        (spec.mu_v, r.mu_v),
        (spec.kappa_v, r.kappa_v),
        (spec.sigma2_chi, r.sigma_chi * r.sigma_chi),
        (spec.sigma2_xi, r.sigma_xi * r.sigma_xi),
        (spec.sigma2_v, r.sigma_v * r.sigma_v),
        (spec.rho_xichi, r.rho_xichi),
        (spec.rho_vtheta, r.rho_vtheta),
    ];
    for (p, x) in scalar {
        lp += p.log_density(x)?;
    }
    if r.rho_xichi.abs() > 1.0 || r.rho_vtheta.abs() > 1.0 {
        return None;
    }
    let premia = phi_premia(phi);
    for (p, x) in spec.premia.iter().zip(premia) {
        lp += p.log_density(x)?;
    }
    for &w in &phi.seasonal.0 {
        lp += spec.omega.log_density(w)?;
    }
    if !spec.obs_var.fixed {
        if spec.obs_var.shared {
            let s = *r.obs_var.first()?;
            if r.obs_var.iter().any(|&x| x != s) {
                return None;
            }
            lp += spec.obs_var.log_density(s)?;
        } else {
            for &s in &r.obs_var {
                lp += spec.obs_var.log_density(s)?;
            }
        }
    }

    let rn = phi.risk_neutral().ok()?;
    if !(rn.beta_star > 0.0 && rn.kappa_xi_star > 0.0) {
        return None;
    }
    let derived = [
        (spec.beta, rn.beta_star),
        (spec.mu_xi, rn.mu_xi_star),
        (spec.kappa_xi, rn.kappa_xi_star),
        (spec.mu_v, rn.mu_v_star),
        (spec.kappa_v, rn.kappa_v_star),
    ];
    if derived.iter().any(|(p, x)| !p.contains(*x)) {
        return None;
    }
    if spec.boundary_nonattainment && (2.0 * r.mu_v < 1.0 || 2.0 * rn.mu_v_star < 1.0) {
        return None;
    }
    lp.is_finite().then_some(lp)
}

fn phi_premia(phi: &ModelParams) -> [f64; 6] {
    let l = &phi.premia;
    [
        l.lambda0_star,
        l.lambda1_star,
        l.lambda2_star,
        l.lambda3_star,
        l.lambda6_star,
        l.lambda7_star,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    /// An entry of [`ModelParams::flatten`].
    Flat(usize),
    /// A diffusion coefficient stored at this flat index, sampled as its square.
    Squared(usize),
    /// Every observation variance at once.
    SharedObsVar,
}

#[derive(Debug, Clone, PartialEq)]
struct Coord {
    name: String,
    target: Target,
    log_scale: bool,
}

/// Maps between [`ModelParams`] and the unconstrained vector the sampler
/// moves in. Only parameters with a non-fixed prior appear.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    coords: Vec<Coord>,
    n_contracts: usize,
}

impl ParameterLayout {
    pub fn new(spec: &PriorSpec, n_contracts: usize) -> Self {
        let mut coords = Vec::new();
        let mut push = |name: &str, prior: &ParamPrior, target, log_scale| {
            if prior.is_free() {
                coords.push(Coord {
                    name: name.to_string(),
                    target,
                    log_scale,
                });
            }
        };
        push("beta", &spec.beta, Target::Flat(0), true);
        push("mu_xi", &spec.mu_xi, Target::Flat(1), false);
        push("kappa_xi", &spec.kappa_xi, Target::Flat(2), true);
        push("mu_v", &spec.mu_v, Target::Flat(3), true);
        push("kappa_v", &spec.kappa_v, Target::Flat(4), true);
        push("sigma2_chi", &spec.sigma2_chi, Target::Squared(5), true);
        push("sigma2_xi", &spec.sigma2_xi, Target::Squared(6), true);
        push("sigma2_v", &spec.sigma2_v, Target::Squared(7), true);
        push("rho_xichi", &spec.rho_xichi, Target::Flat(8), false);
        push("rho_vtheta", &spec.rho_vtheta, Target::Flat(9), false);
        let premia_names = [
            "lambda0_star",
            "lambda1_star",
            "lambda2_star",
            "lambda3_star",
            "lambda6_star",
            "lambda7_star",
        ];
        let premia_at = 10 + n_contracts;
        for (k, name) in premia_names.iter().enumerate() {
            push(name, &spec.premia[k], Target::Flat(premia_at + k), false);
        }
        for k in 0..11 {
            push(&format!("omega_{}", k + 2), &spec.omega, Target::Flat(premia_at + 6 + k), false);
        }
        if !spec.obs_var.fixed {
            if spec.obs_var.shared {
                coords.push(Coord {
                    name: "obs_var".into(),
                    target: Target::SharedObsVar,
                    log_scale: true,
                });
            } else {
                for n in 0..n_contracts {
                    coords.push(Coord {
                        name: format!("obs_var_{}", n + 1),
                        target: Target::Flat(10 + n),
                        log_scale: true,
                    });
                }
            }
        }
        Self { coords, n_contracts }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.coords.iter().map(|c| c.name.clone()).collect()
    }

    /// Sampler coordinates of `phi`. Fails if a log-scale value is not positive.
    pub fn encode(&self, phi: &ModelParams) -> Result<Vec<f64>> {
        let flat = phi.flatten();
        self.coords
            .iter()
            .map(|c| {
                let x = match c.target {
                    Target::Flat(i) => flat[i],
                    Target::Squared(i) => flat[i] * flat[i],
                    Target::SharedObsVar => flat[10],
                };
                if c.log_scale {
                    if !(x > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "{} must be positive to be sampled on the log scale, got {x}",
                            c.name
                        )));
                    }
                    Ok(x.ln())
                } else {
                    Ok(x)
                }
            })
            .collect()
    }

    /// Writes the sampler coordinates `u` over a copy of `template`.
    pub fn decode(&self, u: &[f64], template: &ModelParams) -> Result<ModelParams> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} sampled coordinates, got {}",
                self.dim(),
                u.len()
            )));
        }
        let mut flat = template.flatten();
        for (c, &v) in self.coords.iter().zip(u) {
            let x = if c.log_scale { v.exp() } else { v };
            match c.target {
                Target::Flat(i) => flat[i] = x,
                Target::Squared(i) => flat[i] = x.sqrt(),
                Target::SharedObsVar => flat[10..10 + self.n_contracts].fill(x),
            }
        }
        ModelParams::unflatten(&flat, self.n_contracts)
    }

    /// `log |d x / d u|` for the log-scale coordinates.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        self.coords
            .iter()
            .zip(u)
            .filter(|(c, _)| c.log_scale)
            .map(|(_, &v)| v)
            .sum()
    }
}

/// Draws every free parameter from its prior over `template`, retrying
/// until the joint support constraints hold.
pub fn sample_prior<R: Rng + ?Sized>(
    spec: &PriorSpec,
    template: &ModelParams,
    rng: &mut R,
) -> Result<ModelParams> {
    let n = template.n_contracts();
    let layout = ParameterLayout::new(spec, n);
    let priors: Vec<Option<ParamPrior>> = layout
        .coords
        .iter()
        .map(|c| prior_for(spec, c))
        .collect();
    for _ in 0..100_000 {
        let u: Vec<f64> = layout
            .coords
            .iter()
            .zip(&priors)
            .map(|(c, p)| {
                let x = match p {
                    Some(ParamPrior::Uniform { lo, hi }) => lo + (hi - lo) * rng.random::<f64>(),
                    _ => {
                        let g: f64 = rand_distr::Distribution::sample(
                            &rand_distr::Gamma::new(spec.obs_var.shape, 1.0 / spec.obs_var.scale)
                                .expect("validated shape and scale"),
                            rng,
                        );
                        1.0 / g
                    }
                };
                if c.log_scale {
                    x.max(f64::MIN_POSITIVE).ln()
                } else {
                    x
                }
            })
            .collect();
        let phi = layout.decode(&u, template)?;
        if log_prior(&phi, spec).is_some() {
            return Ok(phi);
        }
    }
    Err(Error::Config("could not draw a parameter vector inside the prior support".into()))
}

fn prior_for(spec: &PriorSpec, c: &Coord) -> Option<ParamPrior> {
    let p = match c.name.as_str() {
        "beta" => spec.beta,
        "mu_xi" => spec.mu_xi,
        "kappa_xi" => spec.kappa_xi,
        "mu_v" => spec.mu_v,
        "kappa_v" => spec.kappa_v,
        "sigma2_chi" => spec.sigma2_chi,
        "sigma2_xi" => spec.sigma2_xi,
        "sigma2_v" => spec.sigma2_v,
        "rho_xichi" => spec.rho_xichi,
        "rho_vtheta" => spec.rho_vtheta,
        "lambda0_star" => spec.premia[0],
        "lambda1_star" => spec.premia[1],
        "lambda2_star" => spec.premia[2],
        "lambda3_star" => spec.premia[3],
        "lambda6_star" => spec.premia[4],
        "lambda7_star" => spec.premia[5],
        s if s.starts_with("omega_") => spec.omega,
        _ => return None,
    };
    Some(p)
}
