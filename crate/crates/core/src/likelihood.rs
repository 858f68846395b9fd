//! Classification-based log-likelihood-ratio estimates and the
//! pseudo-marginal likelihood estimators used as baselines.

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassifierSpec, Discriminator, FeatureMatrix, FeatureSpec};
use crate::error::{Error, Result};
use crate::models::{ricker_population_path, Dataset, LatentSource, ModelSpec, ParamPoint};
use crate::rng::RngStream;
use crate::special::{ln_normal_pdf, ln_poisson_pmf, log_sum_exp, softplus};

/// How fake data are turned into a likelihood-ratio estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhcEstimator {
    pub classifier: ClassifierSpec,
    pub features: FeatureSpec,
    /// Fake sample size.
    pub m: usize,
    /// Replicates averaged on the log scale.
    #[serde(default = "one")]
    pub nrep: usize,
}

fn one() -> usize {
    1
}

impl MhcEstimator {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config("m must be at least 2".into()));
        }
        if self.nrep < 1 {
            return Err(Error::Config("nrep must be at least 1".into()));
        }
        self.classifier.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikEstimate {
    pub eta: f64,
    pub per_rep: Vec<f64>,
    pub theta: ParamPoint,
    pub latents: Vec<LatentSource>,
}

/// `sum_i log((1 - D(x_i)) / D(x_i))` over the real feature rows.
pub fn log_lik_ratio(d: &Discriminator, real: &FeatureMatrix) -> Result<f64> {
    let mut total = 0.0;
    for row in real.iter_rows() {
        total -= d.log_odds(row)?;
    }
    Ok(total)
}

/// One replicate: simulate at `theta`, fit real-vs-fake, evaluate on the real rows.
fn one_rep(
    model: &ModelSpec,
    theta: &ParamPoint,
    real: &Dataset,
    latent: &LatentSource,
    cfg: &MhcEstimator,
    fit_stream: &RngStream,
) -> Result<f64> {
    let fake = model.simulate(theta, latent, cfg.m)?;
    let (real_f, fake_f) = classifiers::pooled_features(real, &fake, &cfg.features)?;
    let d = classifiers::fit(&cfg.classifier, &real_f, &fake_f, &mut fit_stream.clone())?;
    log_lik_ratio(&d, &real_f)
}

/// Estimates `log p_theta(real) - log p_theta0(real)` averaged over one
/// replicate per entry of `latents`. The oracle classifier needs `truth`.
pub fn estimate(
    model: &ModelSpec,
    theta: &ParamPoint,
    truth: Option<&ParamPoint>,
    real: &Dataset,
    latents: &[LatentSource],
    cfg: &MhcEstimator,
    fit_streams: &[RngStream],
) -> Result<LogLikEstimate> {
    if latents.is_empty() || latents.len() != fit_streams.len() {
        return Err(Error::Contract(format!(
            "{} latent sources for {} fit streams",
            latents.len(),
            fit_streams.len()
        )));
    }
    model.check_theta(theta)?;
    let per_rep: Vec<f64> = if cfg.classifier.is_oracle() {
        let theta0 = truth.ok_or_else(|| {
            Error::Contract("the oracle classifier needs the true parameter".into())
        })?;
        let d = classifiers::oracle(model, theta, theta0, cfg.classifier.clip)?;
        let real_f = FeatureMatrix::new(real.n(), real.p(), real.values().to_vec())?;
        let eta = log_lik_ratio(&d, &real_f)?;
        vec![eta; latents.len()]
    } else {
        latents
            .iter()
            .zip(fit_streams)
            .map(|(l, s)| one_rep(model, theta, real, l, cfg, s))
            .collect::<Result<_>>()?
    };
    let eta = per_rep.iter().sum::<f64>() / per_rep.len() as f64;
    Ok(LogLikEstimate {
        eta,
        per_rep,
        theta: theta.clone(),
        latents: latents.to_vec(),
    })
}

/// Estimates `log p_new(real) - log p_old(real)` from a classifier trained
/// on fake data at `theta_old` (label 1) against fake data at `theta_new`.
#[allow(clippy::too_many_arguments)]
pub fn two_sample_delta(
    model: &ModelSpec,
    theta_old: &ParamPoint,
    theta_new: &ParamPoint,
    real: &Dataset,
    latent_old: &LatentSource,
    latent_new: &LatentSource,
    cfg: &MhcEstimator,
    fit_stream: &RngStream,
) -> Result<f64> {
    let fake_old = model.simulate(theta_old, latent_old, cfg.m)?;
    let fake_new = model.simulate(theta_new, latent_new, cfg.m)?;
    let basis = if cfg.features.pcs() > 0 {
        Some(classifiers::PcaBasis::fit(
            &[&fake_old, &fake_new],
            cfg.features.pcs(),
        )?)
    } else {
        None
    };
    let fo = classifiers::build_features(&fake_old, &cfg.features, basis.as_ref())?;
    let fnew = classifiers::build_features(&fake_new, &cfg.features, basis.as_ref())?;
    let rf = classifiers::build_features(real, &cfg.features, basis.as_ref())?;
    let d = classifiers::fit(&cfg.classifier, &fo, &fnew, &mut fit_stream.clone())?;
    log_lik_ratio(&d, &rf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDiagnostic {
    pub u_theta: f64,
    pub theta: ParamPoint,
    pub n: usize,
}

/// The log-posterior residual `sum_i [log((1-D^)/(1-D)) - log(D^/D)]` with
/// `D` the exact discriminator between `theta0` (real) and `theta`.
pub fn posterior_residual(
    model: &ModelSpec,
    theta: &ParamPoint,
    theta0: &ParamPoint,
    d: &Discriminator,
    real: &Dataset,
    real_features: &FeatureMatrix,
) -> Result<ResidualDiagnostic> {
    if real.n() != real_features.rows() {
        return Err(Error::Contract("raw and feature rows differ in count".into()));
    }
    let exact = classifiers::oracle(model, theta, theta0, d.clip)?;
    let mut u = 0.0;
    for (raw, feat) in real.rows().zip(real_features.iter_rows()) {
        let lh = d.log_odds(feat)?;
        let l = exact.log_odds(raw)?;
        // log D = -softplus(-l), log(1 - D) = -softplus(l)
        let (ln_dh, ln_1m_dh) = (-softplus(-lh), -softplus(lh));
        let (ln_d, ln_1m_d) = (-softplus(-l), -softplus(l));
        u += (ln_1m_dh - ln_1m_d) - (ln_dh - ln_d);
    }
    Ok(ResidualDiagnostic {
        u_theta: u,
        theta: theta.clone(),
        n: real.n(),
    })
}

fn cir_layout(model: &ModelSpec) -> Result<(f64, f64)> {
    match model {
        ModelSpec::Cir { delta, x0, .. } => Ok((*delta, *x0)),
        other => Err(Error::Unsupported(format!(
            "MCWM likelihood is defined for cir, not {}",
            other.id().as_str()
        ))),
    }
}

/// Modified-Brownian-bridge estimate of one log transition density over
/// `delta`, from `x` to `y`, with `m_steps` Euler steps and `n_paths` bridges.
pub fn mbb_log_transition(
    theta: &[f64],
    delta: f64,
    x: f64,
    y: f64,
    m_steps: usize,
    n_paths: usize,
    stream: &mut RngStream,
    weights: &mut Vec<f64>,
) -> Result<f64> {
    let (alpha, beta, sigma) = (theta[0], theta[1], theta[2]);
    let mm = m_steps as f64;
    let h = delta / mm;
    let s2 = sigma * sigma;
    weights.clear();
    for _ in 0..n_paths {
        let mut u = x;
        let mut lw = 0.0;
        let mut alive = true;
        for m in 0..m_steps - 1 {
            let left = (m_steps - m) as f64;
            let mean = u + (y - u) / left;
            let sd = (s2 * h * (left - 1.0) / left * u).sqrt();
            let next = mean + sd * stream.normal();
            if !(next > 0.0) {
                alive = false;
                break;
            }
            lw -= ln_normal_pdf(next, mean, sd);
            lw += ln_normal_pdf(next, u + h * beta * (alpha - u), sigma * (h * u).sqrt());
            u = next;
        }
        if !alive {
            weights.push(f64::NEG_INFINITY);
            continue;
        }
        lw += ln_normal_pdf(y, u + h * beta * (alpha - u), sigma * (h * u).sqrt());
        if lw.is_nan() {
            return Err(Error::Domain(format!(
                "bridge weight is NaN at theta {theta:?}"
            )));
        }
        weights.push(lw);
    }
    let total = log_sum_exp(weights);
    if total.is_nan() {
        return Err(Error::Domain(format!("transition estimate is NaN at theta {theta:?}")));
    }
    Ok(total - (n_paths as f64).ln())
}

/// MCWM log-likelihood of CIR series: every transition, including the one
/// from the initial value, estimated by [`mbb_log_transition`].
pub fn mcwm_log_lik(
    model: &ModelSpec,
    data: &Dataset,
    theta: &ParamPoint,
    m_steps: usize,
    n_paths: usize,
    stream: &mut RngStream,
) -> Result<f64> {
    let (delta, x0) = cir_layout(model)?;
    if m_steps < 2 || n_paths < 1 {
        return Err(Error::Contract("MCWM needs M >= 2 and N >= 1".into()));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite parameter {:?}", &theta[..])));
    }
    model.check_theta(theta)?;
    if let Some(bad) = data.values().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("CIR observation {bad} is not positive")));
    }
    let mut weights = Vec::with_capacity(n_paths);
    let mut total = 0.0;
    for row in data.rows() {
        let mut prev = x0;
        for &y in row {
            total += mbb_log_transition(theta, delta, prev, y, m_steps, n_paths, stream, &mut weights)?;
            prev = y;
        }
    }
    Ok(total)
}

/// Pseudo-marginal Ricker log-likelihood averaging the conditional Poisson
/// likelihood over `k` fresh population paths per observation.
pub fn ricker_pm_log_lik(
    model: &ModelSpec,
    data: &Dataset,
    theta: &ParamPoint,
    k: usize,
    stream: &mut RngStream,
) -> Result<f64> {
    let t_len = match model {
        ModelSpec::Ricker { t_len } => *t_len,
        other => {
            return Err(Error::Unsupported(format!(
                "Ricker likelihood requested for {}",
                other.id().as_str()
            )))
        }
    };
    if k == 0 {
        return Err(Error::Contract("K must be at least 1".into()));
    }
    model.check_theta(theta)?;
    let phi = theta[2];
    let mut eps = vec![0.0; t_len];
    let mut path = Vec::with_capacity(t_len);
    let mut terms = Vec::with_capacity(k);
    let mut total = 0.0;
    for row in data.rows() {
        terms.clear();
        for _ in 0..k {
            eps.iter_mut().for_each(|e| *e = stream.normal());
            ricker_population_path(theta, &eps, &mut path);
            let ll: f64 = row
                .iter()
                .zip(&path)
                .map(|(x, n)| ln_poisson_pmf(*x, phi * n))
                .sum();
            terms.push(if ll.is_nan() { f64::NEG_INFINITY } else { ll });
        }
        total += log_sum_exp(&terms) - (k as f64).ln();
    }
    Ok(total)
}
