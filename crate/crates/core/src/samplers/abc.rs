use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prior::Prior;
use super::{purpose, Chain};
use crate::diagnostics::summary_stats;
use crate::error::{Error, Result};
use crate::models::{Dataset, ModelSpec, ParamPoint};
use crate::rng::{make_stream, stream_id};

/// Summary statistic compared between observed and simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbcSummary {
    /// Per-series moments and correlations, averaged over rows.
    SeriesStats {
        #[serde(default = "two")]
        n_series: usize,
    },
    Sum,
    Mean,
}

fn two() -> usize {
    2
}

impl AbcSummary {
    pub fn compute(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            AbcSummary::SeriesStats { n_series } => summary_stats(data, *n_series),
            AbcSummary::Sum => Ok(vec![data.values().iter().sum()]),
            AbcSummary::Mean => {
                let v = data.values();
                Ok(vec![v.iter().sum::<f64>() / v.len() as f64])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    /// Prior draws ranked by distance.
    pub draws: usize,
    /// Number kept.
    pub accept: usize,
    /// Extra draws used only to scale the summaries.
    #[serde(default = "default_pilot")]
    pub pilot: usize,
    pub seed: u64,
    #[serde(default)]
    pub chain_index: u32,
}

fn default_pilot() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcResult {
    pub draws: Vec<ParamPoint>,
    pub distances: Vec<f64>,
    /// Indices into `draws` in ascending order of distance.
    pub accepted: Vec<usize>,
    pub scale: Vec<f64>,
    pub observed: Vec<f64>,
}

impl AbcResult {
    pub fn accepted_draws(&self) -> Vec<ParamPoint> {
        let mut idx = self.accepted.clone();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.draws[i].clone()).collect()
    }

    /// The accepted set in draw order, `log_lik_est` holding minus the distance.
    pub fn to_chain(&self, model: &ModelSpec, cfg: &AbcConfig) -> Chain {
        let mut idx = self.accepted.clone();
        idx.sort_unstable();
        Chain {
            algorithm: "abc".into(),
            param_names: model.param_names().iter().map(|s| s.to_string()).collect(),
            discrete: model.discrete_coordinates(),
            draws: idx.iter().map(|&i| self.draws[i].clone()).collect(),
            log_lik_est: idx.iter().map(|&i| -self.distances[i]).collect(),
            log_prior: vec![0.0; idx.len()],
            accepted: vec![true; idx.len()],
            seed: cfg.seed,
            chain_index: cfg.chain_index,
            streams: vec![("abc".into(), stream_id(purpose::ABC, cfg.chain_index, 0))],
            wall_clock_secs: 0.0,
        }
    }
}

/// Simulates a dataset the size of `real` at a prior draw; `None` summary on explosion.
fn simulate_one(
    model: &ModelSpec,
    prior: &Prior,
    summary: &AbcSummary,
    n: usize,
    seed: u64,
    id: u64,
) -> Result<(ParamPoint, Option<Vec<f64>>)> {
    let mut s = make_stream(seed, id);
    let theta = prior.sample(&mut s)?;
    if model.check_theta(&theta).is_err() {
        return Ok((theta, None));
    }
    let latent = model.draw_latent(n, &mut s)?;
    match model.simulate(&theta, &latent, n) {
        Ok(d) => Ok((theta, Some(summary.compute(&d)?))),
        Err(Error::Explosion { .. }) => Ok((theta, None)),
        Err(e) => Err(e),
    }
}

/// Rejection ABC: keeps the `accept` prior draws whose standardised
/// summaries lie closest to the observed ones.
pub fn run_abc(
    model: &ModelSpec,
    prior: &Prior,
    summary: &AbcSummary,
    real: &Dataset,
    cfg: &AbcConfig,
) -> Result<AbcResult> {
    if !prior.is_proper() {
        return Err(Error::Config("abc requires proper prior".into()));
    }
    prior.validate(model.dim())?;
    if cfg.accept == 0 || cfg.accept > cfg.draws {
        return Err(Error::Config(format!(
            "abc must accept between 1 and {} draws",
            cfg.draws
        )));
    }
    let observed = summary.compute(real)?;
    let n = real.n();
    let id = |i: usize| stream_id(purpose::ABC, cfg.chain_index, i as u32);

    let pilot: Vec<Option<Vec<f64>>> = (0..cfg.pilot)
        .into_par_iter()
        .map(|i| simulate_one(model, prior, summary, n, cfg.seed, id(i)).map(|r| r.1))
        .collect::<Result<_>>()?;
    let scale: Vec<f64> = (0..observed.len())
        .map(|k| {
            let vals: Vec<f64> = pilot
                .iter()
                .flatten()
                .map(|s| s[k])
                .filter(|v| v.is_finite())
                .collect();
            if vals.len() < 2 {
                return 1.0;
            }
            let sd = crate::special::variance(&vals).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();

    let sims: Vec<(ParamPoint, Option<Vec<f64>>)> = (0..cfg.draws)
        .into_par_iter()
        .map(|i| simulate_one(model, prior, summary, n, cfg.seed, id(cfg.pilot + i)))
        .collect::<Result<_>>()?;
    let mut draws = Vec::with_capacity(cfg.draws);
    let mut distances = Vec::with_capacity(cfg.draws);
    for (theta, stats) in sims {
        let d = match stats {
            Some(s) => {
                let d2: f64 = s
                    .iter()
                    .zip(&observed)
                    .zip(&scale)
                    .map(|((a, b), sd)| ((a - b) / sd).powi(2))
                    .sum();
                if d2.is_nan() {
                    f64::INFINITY
                } else {
                    d2.sqrt()
                }
            }
            None => f64::INFINITY,
        };
        draws.push(theta);
        distances.push(d);
    }
    let mut order: Vec<usize> = (0..draws.len()).collect();
    order.sort_by(|a, b| distances[*a].total_cmp(&distances[*b]));
    order.truncate(cfg.accept);
    Ok(AbcResult {
        draws,
        distances,
        accepted: order,
        scale,
        observed,
    })
}
