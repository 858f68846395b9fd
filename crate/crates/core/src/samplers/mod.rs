//! Metropolis-Hastings kernels driven by exact, classifier-based or
//! pseudo-marginal likelihood estimates, plus rejection ABC.

pub mod abc;
pub mod chain;
pub mod prior;
pub mod proposal;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use abc::{run_abc, AbcConfig, AbcResult, AbcSummary};
pub use chain::{debias, Chain};
pub use prior::{NigPosterior, Prior};
pub use proposal::{CoordKernel, Proposal, WindowBlock};

use crate::error::{Error, Result};
use crate::likelihood::{self, MhcEstimator};
use crate::models::{Dataset, LatentSource, ModelSpec, ParamPoint};
use crate::rng::{make_stream, stream_id, RngStream};

/// Stream purposes; combined with the chain index and step by [`stream_id`].
pub mod purpose {
    pub const KERNEL: u8 = 1;
    pub const LATENT: u8 = 2;
    pub const FIT: u8 = 3;
    pub const PSEUDO: u8 = 4;
    pub const ABC: u8 = 5;
    pub const DATA: u8 = 6;
}

/// `min(exp(d_lik + d_prior + log_q_ratio), 1)`; any `-inf` in the new
/// state gives 0.
pub fn accept_prob(
    log_lik_new: f64,
    log_lik_old: f64,
    log_prior_new: f64,
    log_prior_old: f64,
    log_q_ratio: f64,
) -> Result<f64> {
    let all = [log_lik_new, log_lik_old, log_prior_new, log_prior_old, log_q_ratio];
    if all.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Contract(format!(
            "acceptance inputs must be finite or -inf: {all:?}"
        )));
    }
    if log_lik_new == f64::NEG_INFINITY
        || log_prior_new == f64::NEG_INFINITY
        || log_q_ratio == f64::NEG_INFINITY
    {
        return Ok(0.0);
    }
    let log_ratio = (log_lik_new - log_lik_old) + (log_prior_new - log_prior_old) + log_q_ratio;
    Ok(if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() })
}

/// The posterior being sampled.
#[derive(Debug, Clone)]
pub struct Target<'a> {
    pub model: &'a ModelSpec,
    pub prior: &'a Prior,
    pub proposal: &'a Proposal,
    pub real: &'a Dataset,
    /// Data-generating parameter; only the oracle classifier uses it.
    pub truth: Option<&'a ParamPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub init: ParamPoint,
    pub seed: u64,
    #[serde(default)]
    pub chain_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhcMode {
    /// One latent source for the whole chain.
    Fixed,
    /// Fresh latent sources every step; the current estimate is carried.
    Random,
    /// Classifier between fake data at the current and proposed values.
    TwoSample,
}

impl MhcMode {
    pub fn algorithm(self) -> &'static str {
        match self {
            MhcMode::Fixed => "mhc_fixed",
            MhcMode::Random => "mhc_random",
            MhcMode::TwoSample => "two_sample",
        }
    }
}

/// Pseudo-marginal estimators refreshed for both states every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PseudoMarginal {
    /// Modified Brownian bridge for CIR; `n_paths` defaults to `m_steps^2`.
    Bridge {
        m_steps: usize,
        n_paths: Option<usize>,
    },
    /// Ricker population paths.
    Paths { k: usize },
}

trait Evaluator {
    fn initial(&mut self, theta: &ParamPoint) -> Result<f64>;
    /// Returns the estimates for `(new, current)`.
    fn evaluate(&mut self, step: u32, cur: &ParamPoint, ll_cur: f64, new: &ParamPoint)
        -> Result<(f64, f64)>;
}

struct Exact<'a> {
    model: &'a ModelSpec,
    real: &'a Dataset,
}

impl Evaluator for Exact<'_> {
    fn initial(&mut self, theta: &ParamPoint) -> Result<f64> {
        self.model.oracle_log_lik(theta, self.real)
    }

    fn evaluate(&mut self, _: u32, _: &ParamPoint, ll_cur: f64, new: &ParamPoint) -> Result<(f64, f64)> {
        Ok((self.model.oracle_log_lik(new, self.real)?, ll_cur))
    }
}

struct Mhc<'a> {
    target: &'a Target<'a>,
    est: &'a MhcEstimator,
    mode: MhcMode,
    seed: u64,
    chain: u32,
    fixed: Option<(Vec<LatentSource>, Vec<RngStream>)>,
}

impl Mhc<'_> {
    fn step_sources(&self, step: u32) -> Result<(Vec<LatentSource>, Vec<RngStream>)> {
        if let Some(f) = &self.fixed {
            return Ok(f.clone());
        }
        let mut ls = make_stream(self.seed, stream_id(purpose::LATENT, self.chain, step));
        let latents = (0..self.est.nrep)
            .map(|_| self.target.model.draw_latent(self.est.m, &mut ls))
            .collect::<Result<Vec<_>>>()?;
        let fits = make_stream(self.seed, stream_id(purpose::FIT, self.chain, step)).split(self.est.nrep)?;
        Ok((latents, fits))
    }

    fn eta(&self, step: u32, theta: &ParamPoint) -> Result<f64> {
        let (latents, fits) = self.step_sources(step)?;
        let t = self.target;
        Ok(likelihood::estimate(t.model, theta, t.truth, t.real, &latents, self.est, &fits)?.eta)
    }
}

impl Evaluator for Mhc<'_> {
    fn initial(&mut self, theta: &ParamPoint) -> Result<f64> {
        if self.mode == MhcMode::Fixed {
            let fixed = self.step_sources(0)?;
            self.fixed = Some(fixed);
        }
        match self.mode {
            MhcMode::TwoSample => Ok(0.0),
            _ => self.eta(0, theta),
        }
    }

    fn evaluate(&mut self, step: u32, cur: &ParamPoint, ll_cur: f64, new: &ParamPoint) -> Result<(f64, f64)> {
        match self.mode {
            MhcMode::Fixed | MhcMode::Random => Ok((self.eta(step, new)?, ll_cur)),
            MhcMode::TwoSample => {
                let mut ls = make_stream(self.seed, stream_id(purpose::LATENT, self.chain, step));
                let latent_old = self.target.model.draw_latent(self.est.m, &mut ls)?;
                let latent_new = self.target.model.draw_latent(self.est.m, &mut ls)?;
                let fit = make_stream(self.seed, stream_id(purpose::FIT, self.chain, step));
                let t = self.target;
                let delta = likelihood::two_sample_delta(
                    t.model,
                    cur,
                    new,
                    t.real,
                    &latent_old,
                    &latent_new,
                    self.est,
                    &fit,
                )?;
                Ok((ll_cur + delta, ll_cur))
            }
        }
    }
}

struct Pseudo<'a> {
    model: &'a ModelSpec,
    real: &'a Dataset,
    kind: PseudoMarginal,
    seed: u64,
    chain: u32,
}

impl Pseudo<'_> {
    fn eval(&self, theta: &ParamPoint, stream: &mut RngStream) -> Result<f64> {
        match self.kind {
            PseudoMarginal::Bridge { m_steps, n_paths } => likelihood::mcwm_log_lik(
                self.model,
                self.real,
                theta,
                m_steps,
                n_paths.unwrap_or(m_steps * m_steps),
                stream,
            ),
            PseudoMarginal::Paths { k } => {
                likelihood::ricker_pm_log_lik(self.model, self.real, theta, k, stream)
            }
        }
    }
}

impl Evaluator for Pseudo<'_> {
    fn initial(&mut self, theta: &ParamPoint) -> Result<f64> {
        let mut s = make_stream(self.seed, stream_id(purpose::PSEUDO, self.chain, 0));
        self.eval(theta, &mut s)
    }

    fn evaluate(&mut self, step: u32, cur: &ParamPoint, _: f64, new: &ParamPoint) -> Result<(f64, f64)> {
        let mut s = make_stream(self.seed, stream_id(purpose::PSEUDO, self.chain, step));
        let ll_new = self.eval(new, &mut s)?;
        let ll_cur = self.eval(cur, &mut s)?;
        Ok((ll_new, ll_cur))
    }
}

fn log_prior(target: &Target, theta: &ParamPoint) -> f64 {
    if target.model.check_theta(theta).is_err() {
        return f64::NEG_INFINITY;
    }
    target.prior.log_density(theta)
}

fn mh_loop(
    target: &Target,
    cfg: &ChainConfig,
    algorithm: &str,
    eval: &mut dyn Evaluator,
) -> Result<Chain> {
    let start = Instant::now();
    let model = target.model;
    model.check_theta(&cfg.init)?;
    target.proposal.validate(model.dim())?;
    target.prior.validate(model.dim())?;
    if cfg.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let lp0 = target.prior.log_density(&cfg.init);
    if lp0 == f64::NEG_INFINITY {
        return Err(Error::Support {
            name: "init".into(),
            value: f64::NAN,
            support: "prior support".into(),
        });
    }
    let kernel_id = stream_id(purpose::KERNEL, cfg.chain_index, 0);
    let mut ks = make_stream(cfg.seed, kernel_id);
    let mut cur = cfg.init.clone();
    let mut ll_cur = eval.initial(&cur)?;
    let mut lp_cur = lp0;

    let n = cfg.iterations;
    let mut chain = Chain {
        algorithm: algorithm.to_string(),
        param_names: model.param_names().iter().map(|s| s.to_string()).collect(),
        discrete: model.discrete_coordinates(),
        draws: Vec::with_capacity(n),
        log_lik_est: Vec::with_capacity(n),
        log_prior: Vec::with_capacity(n),
        accepted: Vec::with_capacity(n),
        seed: cfg.seed,
        chain_index: cfg.chain_index,
        streams: vec![
            ("kernel".into(), kernel_id),
            ("latent".into(), stream_id(purpose::LATENT, cfg.chain_index, 0)),
            ("fit".into(), stream_id(purpose::FIT, cfg.chain_index, 0)),
            ("pseudo".into(), stream_id(purpose::PSEUDO, cfg.chain_index, 0)),
        ],
        wall_clock_secs: 0.0,
    };

    for t in 1..=n {
        let step = t as u32;
        let (new, log_q) = target.proposal.propose(&cur, &mut ks);
        let u = ks.uniform();
        let lp_new = log_prior(target, &new);
        let mut accept = false;
        if lp_new > f64::NEG_INFINITY {
            match eval.evaluate(step, &cur, ll_cur, &new) {
                Ok((ll_new, ll_cur_now)) => {
                    ll_cur = ll_cur_now;
                    let a = accept_prob(ll_new, ll_cur, lp_new, lp_cur, log_q)?;
                    if u < a {
                        accept = true;
                        cur = new;
                        ll_cur = ll_new;
                        lp_cur = lp_new;
                    }
                }
                Err(Error::Explosion { cap, recorded, .. }) => {
                    log::debug!("step {t}: simulation exceeded cap {cap} after {recorded} points");
                }
                Err(e) => log::warn!("step {t}: estimate failed, rejecting: {e}"),
            }
        }
        chain.draws.push(cur.clone());
        chain.log_lik_est.push(ll_cur);
        chain.log_prior.push(lp_cur);
        chain.accepted.push(accept);
    }
    chain.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(chain)
}

pub fn run_mhc(target: &Target, mode: MhcMode, est: &MhcEstimator, cfg: &ChainConfig) -> Result<Chain> {
    est.validate()?;
    let mut eval = Mhc {
        target,
        est,
        mode,
        seed: cfg.seed,
        chain: cfg.chain_index,
        fixed: None,
    };
    mh_loop(target, cfg, mode.algorithm(), &mut eval)
}

pub fn run_exact_mh(target: &Target, cfg: &ChainConfig) -> Result<Chain> {
    if !target.model.has_oracle() {
        return Err(Error::Unavailable(format!(
            "exact likelihood of {}",
            target.model.id().as_str()
        )));
    }
    let mut eval = Exact {
        model: target.model,
        real: target.real,
    };
    mh_loop(target, cfg, "exact_mh", &mut eval)
}

/// Monte Carlo within Metropolis: both likelihoods re-estimated every step.
pub fn run_mcwm(target: &Target, kind: PseudoMarginal, cfg: &ChainConfig) -> Result<Chain> {
    match (target.model, kind) {
        (ModelSpec::Cir { .. }, PseudoMarginal::Bridge { m_steps, n_paths }) => {
            if m_steps < 2 || n_paths == Some(0) {
                return Err(Error::Config("mcwm needs M >= 2 and N >= 1".into()));
            }
        }
        (ModelSpec::Ricker { .. }, PseudoMarginal::Paths { k }) => {
            if k == 0 {
                return Err(Error::Config("mcwm needs K >= 1".into()));
            }
        }
        (m, _) => {
            return Err(Error::Unsupported(format!(
                "no pseudo-marginal estimator of this kind for {}",
                m.id().as_str()
            )))
        }
    }
    let mut eval = Pseudo {
        model: target.model,
        real: target.real,
        kind,
        seed: cfg.seed,
        chain: cfg.chain_index,
    };
    mh_loop(target, cfg, "mcwm", &mut eval)
}
