//! Chain summaries, ABC summary statistics, Bayes factors and the
//! quadratic-approximation check for the normal location-scale model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, build_features, ClassifierSpec, FeatureSpec, Fitted, SummaryOptions};
use crate::error::{Error, Result};
use crate::models::{Dataset, ModelSpec, ParamPoint};
use crate::rng::{make_stream, stream_id};
use crate::samplers::{purpose, Chain};
use crate::special::{ln_normal_pdf, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub value: f64,
    /// The series has zero variance; `value` is then 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordSummary {
    pub param: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: Ess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub burn_in: usize,
    pub kept: usize,
    pub coords: Vec<CoordSummary>,
    pub accept_rate: f64,
}

impl PosteriorSummary {
    pub fn get(&self, param: &str) -> Option<&CoordSummary> {
        self.coords.iter().find(|c| c.param == param)
    }

    /// One row per parameter: `param,mean,l,u,ess,accept_rate`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "param,mean,l,u,ess,accept_rate")?;
        for c in &self.coords {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.param, c.mean, c.lower, c.upper, c.ess.value, self.accept_rate
            )?;
        }
        Ok(())
    }
}

/// Means, equal-tailed intervals and ESS over the draws after `burn_in`.
pub fn summarize(chain: &Chain, burn_in: usize, level: f64) -> Result<PosteriorSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Contract(format!("credible level {level} not in (0, 1)")));
    }
    if burn_in >= chain.len() {
        return Err(Error::Contract(format!(
            "burn-in {burn_in} leaves no draws of {}",
            chain.len()
        )));
    }
    let tail = (1.0 - level) / 2.0;
    let coords = (0..chain.dim())
        .map(|j| {
            let x: Vec<f64> = chain.draws[burn_in..].iter().map(|d| d[j]).collect();
            let mut sorted = x.clone();
            sorted.sort_by(f64::total_cmp);
            CoordSummary {
                param: chain.param_names[j].clone(),
                mean: x.iter().sum::<f64>() / x.len() as f64,
                lower: quantile_sorted(&sorted, tail),
                upper: quantile_sorted(&sorted, 1.0 - tail),
                ess: ess(&x),
            }
        })
        .collect();
    Ok(PosteriorSummary {
        level,
        burn_in,
        kept: chain.len() - burn_in,
        coords,
        accept_rate: chain.acceptance_rate(),
    })
}

/// Effective sample size by Geyer's initial monotone sequence estimator.
pub fn ess(x: &[f64]) -> Ess {
    let t = x.len();
    if t == 0 {
        return Ess {
            value: 0.0,
            degenerate: true,
        };
    }
    let m = x.iter().sum::<f64>() / t as f64;
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let acov = |k: usize| d.iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / t as f64;
    let g0 = acov(0);
    if !(g0 > 0.0) {
        return Ess {
            value: 0.0,
            degenerate: true,
        };
    }
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < t {
        let pair = acov(2 * k) + acov(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        k += 1;
    }
    let sigma2 = -g0 + 2.0 * sum_pairs;
    let value = if sigma2 > 0.0 {
        (t as f64 * g0 / sigma2).min(t as f64)
    } else {
        t as f64
    };
    Ess {
        value,
        degenerate: false,
    }
}

/// Per-series mean, log variance, lag-1 and lag-2 autocorrelation and the
/// pairwise cross-correlations, averaged over the rows of `data`.
pub fn summary_stats(data: &Dataset, n_series: usize) -> Result<Vec<f64>> {
    if n_series == 0 || data.p() % n_series != 0 || data.p() / n_series < 3 {
        return Err(Error::Contract(format!(
            "rows of width {} do not split into {n_series} series of length >= 3",
            data.p()
        )));
    }
    if data.n() == 0 {
        return Err(Error::Contract("no rows to summarise".into()));
    }
    let spec = FeatureSpec::Summary(SummaryOptions {
        mean: true,
        log_var: true,
        acf_lags: vec![1, 2],
        cross_corr: true,
        pcs: 0,
        n_series,
    });
    let f = build_features(data, &spec, None)?;
    let mut avg = vec![0.0; f.cols()];
    for row in f.iter_rows() {
        for (a, v) in avg.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in avg.iter_mut() {
        *a /= f.rows() as f64;
    }
    Ok(avg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub n1: usize,
    pub n2: usize,
    /// `n1 / n2`, infinite or zero when one label is absent.
    pub value: f64,
    pub degenerate: bool,
}

/// Ratio of model-1 to model-2 frequencies among label draws.
pub fn bayes_factor(labels: &[f64]) -> Result<BayesFactor> {
    let mut n1 = 0;
    let mut n2 = 0;
    for &l in labels {
        if l == 1.0 {
            n1 += 1;
        } else if l == 2.0 {
            n2 += 1;
        } else {
            return Err(Error::Contract(format!("model label {l} not in {{1, 2}}")));
        }
    }
    if n1 + n2 == 0 {
        return Err(Error::Contract("no model labels".into()));
    }
    let value = match (n1, n2) {
        (_, 0) => f64::INFINITY,
        (0, _) => 0.0,
        _ => n1 as f64 / n2 as f64,
    };
    Ok(BayesFactor {
        n1,
        n2,
        value,
        degenerate: n1 == 0 || n2 == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Mu,
    Sigma2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoryDiscriminator {
    /// Unpenalised logistic regression on `(1, x, x^2)`.
    LogisticMle,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub n: usize,
    pub m: usize,
    /// Offsets from `theta0 = (0, 1)` along `direction`; symmetric about 0.
    pub grid: Vec<f64>,
    pub direction: Direction,
    pub discriminator: TheoryDiscriminator,
    pub seed: u64,
}

impl TheoryConfig {
    pub fn symmetric_grid(half_width: f64, points: usize) -> Vec<f64> {
        let k = points.max(2) - 1;
        (0..=k)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / k as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub grid: Vec<f64>,
    /// `sum_i log p_hat_theta(x_i) / p_theta0(x_i)`.
    pub estimated: Vec<f64>,
    /// `sum_i log p_theta(x_i) / p_theta0(x_i)`.
    pub truth: Vec<f64>,
    /// Least-squares `a + b h - n I h^2 / 2` through `estimated`.
    pub quadratic: Vec<f64>,
    pub fisher: f64,
    pub max_deviation: f64,
    pub curve_range: f64,
    /// `n (c_theta - c_theta0)`.
    pub scaling: Vec<f64>,
    /// `n (P_n - P_theta0)(sqrt(p_hat_theta / p_hat_theta0) - 1 - h' score / 2)`.
    pub linear_remainder: Vec<f64>,
    /// `n (P_n - P_theta0)(sqrt(p_hat_theta / p_hat_theta0) - 1)^2`.
    pub square_remainder: Vec<f64>,
}

impl TheoryReport {
    pub fn relative_deviation(&self) -> f64 {
        self.max_deviation / self.curve_range
    }
}

/// Logistic coefficients `(b0, b1, b2)` of `log D/(1-D)` on `(1, x, x^2)`.
fn oracle_beta(mu: f64, s2: f64) -> [f64; 3] {
    [
        0.5 * s2.ln() + mu * mu / (2.0 * s2),
        -mu / s2,
        0.5 / s2 - 0.5,
    ]
}

/// `E exp(a + b X + c X^2)` for `X ~ N(0, 1)`, `c < 1/2`.
fn gauss_exp_quad(a: f64, b: f64, c: f64) -> f64 {
    let s = 1.0 - 2.0 * c;
    (a + b * b / (2.0 * s)).exp() / s.sqrt()
}

/// Estimated and true log-likelihood curves around `(0, 1)` for
/// `N(mu, sigma2)` with a fixed latent sample, and the fixed-curvature
/// quadratic that fits the estimated curve best.
pub fn theory_check_normal(cfg: &TheoryConfig) -> Result<TheoryReport> {
    let TheoryConfig {
        n,
        m,
        ref grid,
        direction,
        discriminator,
        seed,
    } = *cfg;
    if n < 2 || m < 2 || grid.len() < 3 {
        return Err(Error::Config("theory check needs n, m >= 2 and 3 grid points".into()));
    }
    let mut sorted = grid.clone();
    sorted.sort_by(f64::total_cmp);
    let symmetric = sorted
        .iter()
        .zip(sorted.iter().rev())
        .all(|(a, b)| (a + b).abs() <= 1e-12 * a.abs().max(1.0));
    if !symmetric {
        return Err(Error::Config("theory grid must be symmetric about 0".into()));
    }
    let model = ModelSpec::NormalLs;
    let theta0 = ParamPoint::new(vec![0.0, 1.0]);
    let real_latent = model.draw_latent(n, &mut make_stream(seed, stream_id(purpose::DATA, 0, 0)))?;
    let real = model.simulate(&theta0, &real_latent, n)?;
    let latent = model.draw_latent(m, &mut make_stream(seed, stream_id(purpose::LATENT, 0, 0)))?;
    let x: Vec<f64> = real.values().to_vec();
    let spec = ClassifierSpec::logistic_mle();

    let theta_at = |h: f64| match direction {
        Direction::Mu => ParamPoint::new(vec![h, 1.0]),
        Direction::Sigma2 => ParamPoint::new(vec![0.0, 1.0 + h]),
    };
    let beta_at = |theta: &ParamPoint| -> Result<[f64; 3]> {
        match discriminator {
            TheoryDiscriminator::Oracle => Ok(oracle_beta(theta[0], theta[1])),
            TheoryDiscriminator::LogisticMle => {
                let fake = model.simulate(theta, &latent, m)?;
                let (rf, ff) = classifiers::pooled_features(&real, &fake, &FeatureSpec::Poly2)?;
                let mut s = make_stream(seed, stream_id(purpose::FIT, 0, 0));
                match classifiers::fit(&spec, &rf, &ff, &mut s)?.fitted {
                    Fitted::Logistic { model, .. } => Ok([model.intercept, model.coef[0], model.coef[1]]),
                    _ => unreachable!("logistic spec"),
                }
            }
        }
    };
    let c_of = |b: &[f64; 3]| -> Result<f64> {
        let s = 1.0 + 2.0 * b[2];
        if !(s > 0.0) {
            return Err(Error::Domain(format!("fitted x^2 coefficient {} leaves c undefined", b[2])));
        }
        Ok((-b[0] + 0.5 * b[1] * b[1] / s).exp() / s.sqrt())
    };

    let b0 = beta_at(&theta0)?;
    let c0 = c_of(&b0)?;
    let nf = n as f64;
    let fisher = match direction {
        Direction::Mu => 1.0,
        Direction::Sigma2 => 0.5,
    };
    let mut report = TheoryReport {
        grid: grid.clone(),
        estimated: Vec::with_capacity(grid.len()),
        truth: Vec::with_capacity(grid.len()),
        quadratic: Vec::new(),
        fisher,
        max_deviation: 0.0,
        curve_range: 0.0,
        scaling: Vec::with_capacity(grid.len()),
        linear_remainder: Vec::with_capacity(grid.len()),
        square_remainder: Vec::with_capacity(grid.len()),
    };
    for &h in grid {
        let theta = theta_at(h);
        let b = beta_at(&theta)?;
        let est: f64 = -x.iter().map(|v| b[0] + b[1] * v + b[2] * v * v).sum::<f64>();
        let sd = theta[1].sqrt();
        let truth: f64 = x
            .iter()
            .map(|v| ln_normal_pdf(*v, theta[0], sd) - ln_normal_pdf(*v, 0.0, 1.0))
            .sum();
        report.estimated.push(est);
        report.truth.push(truth);
        report.scaling.push(nf * (c_of(&b)? - c0));

        // sqrt(p_hat_theta / p_hat_theta0) = exp(ga + gb x + gc x^2)
        let (ga, gb, gc) = (
            -0.5 * (b[0] - b0[0]),
            -0.5 * (b[1] - b0[1]),
            -0.5 * (b[2] - b0[2]),
        );
        let score_h = |v: f64| match direction {
            Direction::Mu => h * v,
            Direction::Sigma2 => h * (v * v - 1.0) / 2.0,
        };
        let mut lin = 0.0;
        let mut sq = 0.0;
        for &v in &x {
            let r = (ga + gb * v + gc * v * v).exp() - 1.0;
            lin += r - score_h(v) / 2.0;
            sq += r * r;
        }
        lin /= nf;
        sq /= nf;
        if !(gc < 0.25) {
            return Err(Error::Domain("remainder expectation diverges".into()));
        }
        let e1 = gauss_exp_quad(ga, gb, gc);
        let e2 = gauss_exp_quad(2.0 * ga, 2.0 * gb, 2.0 * gc);
        report.linear_remainder.push(nf * (lin - (e1 - 1.0)));
        report.square_remainder.push(nf * (sq - (e2 - 2.0 * e1 + 1.0)));
    }

    let k = 0.5 * nf * fisher;
    let r: Vec<f64> = grid.iter().zip(&report.estimated).map(|(h, y)| y + k * h * h).collect();
    let (a, b) = least_squares_line(grid, &r);
    report.quadratic = grid.iter().map(|h| a + b * h - k * h * h).collect();
    report.max_deviation = report
        .estimated
        .iter()
        .zip(&report.quadratic)
        .map(|(y, q)| (y - q).abs())
        .fold(0.0, f64::max);
    let hi = report.estimated.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = report.estimated.iter().cloned().fold(f64::INFINITY, f64::min);
    report.curve_range = hi - lo;
    if report.estimated.iter().chain(&report.quadratic).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite theory curve".into()));
    }
    Ok(report)
}

fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}
