use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::models::ParamPoint;
use crate::rng::RngStream;
use crate::special::ln_normal_pdf;

/// Prior densities, up to an additive constant on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `1(0<alpha<1) 1(beta>0) / sigma` on `(alpha, beta, sigma)`.
    CirImproper,
    /// Constant on the model's support.
    Flat,
    /// `sigma2 ~ IG(alpha, beta)`, `mu | sigma2 ~ N(mu0, sigma2 / nu)` on `(mu, sigma2)`.
    NormalInverseGamma {
        mu0: f64,
        nu: f64,
        alpha: f64,
        beta: f64,
    },
    /// Uniform over the labels `{1, 2}` and `mu ~ N(mu_mean, mu_sd^2)` on `(model, mu)`.
    ModelChoice {
        #[serde(default)]
        mu_mean: f64,
        #[serde(default = "unit")]
        mu_sd: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Prior {
    pub fn is_proper(&self) -> bool {
        !matches!(self, Prior::CirImproper | Prior::Flat)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("prior: {msg}")));
        match self {
            Prior::UniformBox { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return bad("box dimension does not match the model");
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return bad("box needs lower < upper");
                }
            }
            Prior::CirImproper if dim != 3 => return bad("cir prior is three-dimensional"),
            Prior::NormalInverseGamma {
                nu, alpha, beta, ..
            } => {
                if dim != 2 {
                    return bad("normal-inverse-gamma prior is two-dimensional");
                }
                if !(*nu > 0.0 && *alpha > 0.0 && *beta > 0.0) {
                    return bad("nu, alpha and beta must be positive");
                }
            }
            Prior::ModelChoice { mu_sd, .. } => {
                if dim != 2 {
                    return bad("model-choice prior is two-dimensional");
                }
                if !(*mu_sd > 0.0) {
                    return bad("mu_sd must be positive");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            Prior::UniformBox { lower, upper } => {
                let inside = theta
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (l, u))| v >= l && v <= u);
                if inside {
                    -lower
                        .iter()
                        .zip(upper)
                        .map(|(l, u)| (u - l).ln())
                        .sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::CirImproper => {
                let (a, b, s) = (theta[0], theta[1], theta[2]);
                if a > 0.0 && a < 1.0 && b > 0.0 && s > 0.0 {
                    -s.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Flat => 0.0,
            Prior::NormalInverseGamma {
                mu0,
                nu,
                alpha,
                beta,
            } => {
                let (mu, s2) = (theta[0], theta[1]);
                if !(s2 > 0.0) {
                    return f64::NEG_INFINITY;
                }
                ln_normal_pdf(mu, *mu0, (s2 / nu).sqrt()) + ln_inv_gamma_pdf(s2, *alpha, *beta)
            }
            Prior::ModelChoice { mu_mean, mu_sd } => {
                if theta[0] == 1.0 || theta[0] == 2.0 {
                    0.5f64.ln() + ln_normal_pdf(theta[1], *mu_mean, *mu_sd)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample(&self, stream: &mut RngStream) -> Result<ParamPoint> {
        let values = match self {
            Prior::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * stream.uniform())
                .collect(),
            Prior::NormalInverseGamma {
                mu0,
                nu,
                alpha,
                beta,
            } => {
                let s2 = beta / stream.gamma(*alpha, 1.0);
                vec![mu0 + (s2 / nu).sqrt() * stream.normal(), s2]
            }
            Prior::ModelChoice { mu_mean, mu_sd } => {
                let label = if stream.uniform() < 0.5 { 1.0 } else { 2.0 };
                vec![label, mu_mean + mu_sd * stream.normal()]
            }
            Prior::CirImproper | Prior::Flat => {
                return Err(Error::Unsupported(
                    "cannot sample from an improper prior".into(),
                ))
            }
        };
        Ok(ParamPoint::new(values))
    }
}

pub fn ln_inv_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Closed-form posterior of the normal model under a normal-inverse-gamma prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigPosterior {
    pub mu: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigPosterior {
    pub fn update(mu0: f64, nu: f64, alpha: f64, beta: f64, x: &[f64]) -> NigPosterior {
        let n = x.len() as f64;
        let xbar = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - xbar) * (v - xbar)).sum();
        NigPosterior {
            mu: (nu * mu0 + n * xbar) / (nu + n),
            nu: nu + n,
            alpha: alpha + n / 2.0,
            beta: beta + 0.5 * ss + n * nu / (nu + n) * (xbar - mu0) * (xbar - mu0) / 2.0,
        }
    }

    pub fn mean_sigma2(&self) -> f64 {
        self.beta / (self.alpha - 1.0)
    }

    pub fn var_sigma2(&self) -> f64 {
        let a = self.alpha;
        self.beta * self.beta / ((a - 1.0) * (a - 1.0) * (a - 2.0))
    }

    /// Marginal variance of `mu` (a scaled Student t).
    pub fn var_mu(&self) -> f64 {
        self.beta / ((self.alpha - 1.0) * self.nu)
    }
}
