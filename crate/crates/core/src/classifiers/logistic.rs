//! L1-penalized logistic regression by IRLS with coordinate descent,
//! with the penalty picked by K-fold cross-validated deviance.
//!
//! Columns are standardized internally (population standard deviation) and
//! coefficients are mapped back to the original scale after fitting.

use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::{sigmoid, softplus};

const WEIGHT_FLOOR: f64 = 1e-5;
const PROB_FLOOR: f64 = 1e-5;
const MAX_OUTER: usize = 100;
const MAX_SWEEPS: usize = 10_000;
const KKT_TOL: f64 = 1e-7;
const DEV_RATIO_MAX: f64 = 0.999;
const DEV_CHANGE_MIN: f64 = 1e-5;

fn default_folds() -> usize {
    10
}
fn default_n_lambda() -> usize {
    50
}
fn default_ratio() -> f64 {
    1e-3
}
fn default_tol() -> f64 {
    1e-7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_n_lambda")]
    pub n_lambda: usize,
    #[serde(default = "default_ratio")]
    pub lambda_min_ratio: f64,
    /// Skip cross-validation and use this penalty. Zero gives the plain MLE.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Coordinate-descent convergence threshold.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            folds: default_folds(),
            n_lambda: default_n_lambda(),
            lambda_min_ratio: default_ratio(),
            lambda: None,
            tol: default_tol(),
        }
    }
}

impl LogisticOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda must be >= 0, got {l}")));
            }
        } else {
            if self.folds < 2 {
                return Err(Error::Config("cross-validation needs at least 2 folds".into()));
            }
            if self.n_lambda < 1 || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
                return Err(Error::Config("bad lambda path settings".into()));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Fitted model on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LogisticModel {
    pub fn log_odds(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(x, b)| x * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogisticFitInfo {
    pub lambda: f64,
    pub lambda_path: Vec<f64>,
    pub cv_deviance: Vec<f64>,
    pub kkt_residual: f64,
    /// Penalized objective after each IRLS step at the selected penalty.
    pub objective_trace: Vec<f64>,
}

/// Standardized column-major design.
struct Problem {
    xs: Vec<Vec<f64>>,
    keep: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    y: Vec<f64>,
    p_full: usize,
}

impl Problem {
    fn new(x: &FeatureMatrix, rows: &[usize], y: &[f64]) -> Problem {
        let n = rows.len() as f64;
        let mut xs = Vec::new();
        let mut keep = Vec::new();
        let mut center = Vec::new();
        let mut scale = Vec::new();
        for j in 0..x.cols() {
            let col: Vec<f64> = rows.iter().map(|&i| x.row(i)[j]).collect();
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            if !(sd > 1e-12 * (1.0 + m.abs())) {
                continue;
            }
            xs.push(col.iter().map(|v| (v - m) / sd).collect());
            keep.push(j);
            center.push(m);
            scale.push(sd);
        }
        Problem {
            xs,
            keep,
            center,
            scale,
            y: rows.iter().map(|&i| y[i]).collect(),
            p_full: x.cols(),
        }
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn linear(&self, b0: f64, beta: &[f64], eta: &mut [f64]) {
        eta.iter_mut().for_each(|e| *e = b0);
        for (col, &b) in self.xs.iter().zip(beta) {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(col) {
                    *e += b * x;
                }
            }
        }
    }

    fn neg_loglik(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y)
            .map(|(e, y)| softplus(*e) - y * e)
            .sum::<f64>()
    }

    fn objective(&self, lambda: f64, b0: f64, beta: &[f64], eta: &mut [f64]) -> f64 {
        self.linear(b0, beta, eta);
        self.neg_loglik(eta) / self.n() as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn kkt(&self, lambda: f64, b0: f64, beta: &[f64], eta: &mut [f64]) -> f64 {
        self.linear(b0, beta, eta);
        let n = self.n() as f64;
        let resid: Vec<f64> = eta.iter().zip(&self.y).map(|(e, y)| y - sigmoid(*e)).collect();
        let mut worst = (resid.iter().sum::<f64>() / n).abs();
        for (col, &b) in self.xs.iter().zip(beta) {
            let g = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n;
            let v = if b != 0.0 {
                (g - lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Solves at one penalty from the warm start in `(b0, beta)`.
    /// With `strict`, iterates until the KKT residual is below `KKT_TOL`;
    /// otherwise stops once an IRLS step moves the coefficients by less than
    /// `tol` in the weighted metric.
    fn solve(
        &self,
        lambda: f64,
        tol: f64,
        strict: bool,
        b0: &mut f64,
        beta: &mut [f64],
        trace: &mut Vec<f64>,
    ) -> f64 {
        let n = self.n();
        let nf = n as f64;
        let p = self.xs.len();
        let mut eta = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut xv = vec![0.0; p];
        let mut f_old = self.objective(lambda, *b0, beta, &mut eta);
        trace.clear();
        trace.push(f_old);
        let mut kkt = if strict { self.kkt(lambda, *b0, beta, &mut eta) } else { f64::INFINITY };

        let inner_tol = if strict { tol * 1e-4 } else { tol };
        for _ in 0..MAX_OUTER {
            if strict && kkt < KKT_TOL {
                break;
            }
            self.linear(*b0, beta, &mut eta);
            for i in 0..n {
                let pr = sigmoid(eta[i]);
                w[i] = (pr * (1.0 - pr)).max(WEIGHT_FLOOR);
                r[i] = (self.y[i] - pr) / w[i];
            }
            let wsum: f64 = w.iter().sum();
            for (j, col) in self.xs.iter().enumerate() {
                xv[j] = col.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>() / nf;
            }

            let mut nb0 = *b0;
            let mut nbeta = beta.to_vec();
            let sweep = |all: bool, nb0: &mut f64, nbeta: &mut [f64], r: &mut [f64]| -> f64 {
                let mut dmax: f64 = 0.0;
                let d0 = r.iter().zip(&w).map(|(ri, wi)| ri * wi).sum::<f64>() / wsum;
                if d0 != 0.0 {
                    *nb0 += d0;
                    r.iter_mut().for_each(|ri| *ri -= d0);
                    dmax = dmax.max(wsum / nf * d0 * d0);
                }
                for j in 0..p {
                    if !all && nbeta[j] == 0.0 {
                        continue;
                    }
                    let col = &self.xs[j];
                    let g = col
                        .iter()
                        .zip(r.iter())
                        .zip(&w)
                        .map(|((x, ri), wi)| wi * x * ri)
                        .sum::<f64>()
                        / nf
                        + xv[j] * nbeta[j];
                    let nb = soft_threshold(g, lambda) / xv[j];
                    let d = nb - nbeta[j];
                    if d != 0.0 {
                        nbeta[j] = nb;
                        for (ri, x) in r.iter_mut().zip(col) {
                            *ri -= d * x;
                        }
                        dmax = dmax.max(xv[j] * d * d);
                    }
                }
                dmax
            };

            let mut sweeps = 0;
            loop {
                let full = sweep(true, &mut nb0, &mut nbeta, &mut r);
                sweeps += 1;
                if full < inner_tol || sweeps >= MAX_SWEEPS {
                    break;
                }
                loop {
                    let d = sweep(false, &mut nb0, &mut nbeta, &mut r);
                    sweeps += 1;
                    if d < inner_tol || sweeps >= MAX_SWEEPS {
                        break;
                    }
                }
            }

            // step halving on the true objective keeps the trace monotone
            let mut t = 1.0;
            let mut accepted = false;
            let step = (0..p)
                .map(|j| xv[j] * (nbeta[j] - beta[j]).powi(2))
                .fold(wsum / nf * (nb0 - *b0).powi(2), f64::max);
            let mut cand = vec![0.0; p];
            for _ in 0..40 {
                let cb0 = *b0 + t * (nb0 - *b0);
                for j in 0..p {
                    cand[j] = beta[j] + t * (nbeta[j] - beta[j]);
                }
                let f = self.objective(lambda, cb0, &cand, &mut eta);
                if f <= f_old {
                    *b0 = cb0;
                    beta.copy_from_slice(&cand);
                    let rel = (f_old - f) / f_old.abs().max(1.0);
                    f_old = f;
                    trace.push(f);
                    accepted = rel > 1e-15;
                    break;
                }
                t *= 0.5;
            }
            if strict {
                kkt = self.kkt(lambda, *b0, beta, &mut eta);
            }
            if !accepted || (!strict && step < tol) {
                break;
            }
        }
        if !strict {
            kkt = self.kkt(lambda, *b0, beta, &mut eta);
        }
        kkt
    }

    fn lambda_max(&self) -> f64 {
        let n = self.n() as f64;
        let ybar = self.y.iter().sum::<f64>() / n;
        self.xs
            .iter()
            .map(|col| {
                (col.iter().zip(&self.y).map(|(x, y)| x * (y - ybar)).sum::<f64>() / n).abs()
            })
            .fold(0.0, f64::max)
    }

    fn to_model(&self, b0: f64, beta: &[f64]) -> LogisticModel {
        let mut coef = vec![0.0; self.p_full];
        let mut intercept = b0;
        for (k, &j) in self.keep.iter().enumerate() {
            coef[j] = beta[k] / self.scale[k];
            intercept -= beta[k] * self.center[k] / self.scale[k];
        }
        LogisticModel { intercept, coef }
    }

    fn deviance(&self, b0: f64, beta: &[f64]) -> f64 {
        let mut eta = vec![0.0; self.n()];
        self.linear(b0, beta, &mut eta);
        2.0 * self.neg_loglik(&eta)
    }

    fn null_start(&self) -> f64 {
        let ybar = self.y.iter().sum::<f64>() / self.n() as f64;
        let ybar = ybar.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        (ybar / (1.0 - ybar)).ln()
    }
}

fn soft_threshold(g: f64, lambda: f64) -> f64 {
    if g > lambda {
        g - lambda
    } else if g < -lambda {
        g + lambda
    } else {
        0.0
    }
}

struct PathFit {
    models: Vec<LogisticModel>,
    coefs: Vec<(f64, Vec<f64>)>,
    traces: Vec<Vec<f64>>,
    kkt: Vec<f64>,
}

/// Fits down `lambdas` with warm starts. With `early_stop`, the path ends once
/// the deviance explained saturates; otherwise later penalties repeat the
/// last solution.
fn fit_path(prob: &Problem, lambdas: &[f64], tol: f64, strict: bool, early_stop: bool) -> PathFit {
    let mut b0 = prob.null_start();
    let mut beta = vec![0.0; prob.xs.len()];
    let null_dev = prob.deviance(b0, &beta);
    let mut out = PathFit {
        models: Vec::new(),
        coefs: Vec::new(),
        traces: Vec::new(),
        kkt: Vec::new(),
    };
    let mut prev_ratio = 0.0;
    for (k, &lambda) in lambdas.iter().enumerate() {
        let mut trace = Vec::new();
        let kkt = prob.solve(lambda, tol, strict, &mut b0, &mut beta, &mut trace);
        out.models.push(prob.to_model(b0, &beta));
        out.coefs.push((b0, beta.clone()));
        out.traces.push(trace);
        out.kkt.push(kkt);
        if early_stop && null_dev > 0.0 {
            let ratio = 1.0 - prob.deviance(b0, &beta) / null_dev;
            if ratio > DEV_RATIO_MAX || (k >= 4 && ratio - prev_ratio < DEV_CHANGE_MIN * ratio) {
                break;
            }
            prev_ratio = ratio;
        }
    }
    out
}

fn heldout_deviance(model: &LogisticModel, x: &FeatureMatrix, y: &[f64], rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&i| {
            let p = sigmoid(model.log_odds(x.row(i))).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            -2.0 * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln())
        })
        .sum()
}

/// Fits on pooled features `x` with labels `y` (1 = real, 0 = fake).
pub fn fit_logistic(
    x: &FeatureMatrix,
    y: &[f64],
    opts: &LogisticOptions,
    stream: &mut RngStream,
) -> Result<(LogisticModel, LogisticFitInfo)> {
    opts.validate()?;
    let n = x.rows();
    let all: Vec<usize> = (0..n).collect();
    let prob = Problem::new(x, &all, y);

    if let Some(lambda) = opts.lambda {
        let path = fit_path(&prob, &[lambda], opts.tol, true, false);
        let info = LogisticFitInfo {
            lambda,
            lambda_path: vec![lambda],
            cv_deviance: Vec::new(),
            kkt_residual: path.kkt[0],
            objective_trace: path.traces[0].clone(),
        };
        return Ok((path.models[0].clone(), info));
    }

    let lmax = prob.lambda_max();
    let lambdas: Vec<f64> = if lmax > 0.0 {
        let l = opts.n_lambda;
        (0..l)
            .map(|k| {
                let frac = if l > 1 { k as f64 / (l - 1) as f64 } else { 0.0 };
                lmax * opts.lambda_min_ratio.powf(frac)
            })
            .collect()
    } else {
        vec![0.0]
    };
    let full = fit_path(&prob, &lambdas, opts.tol, false, true);
    let lambdas = &lambdas[..full.models.len()];

    let folds = opts.folds.min(n);
    let mut order = all.clone();
    stream.shuffle(&mut order);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let mut cv = vec![0.0; lambdas.len()];
    for f in 0..folds {
        let train: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] == f).collect();
        let sub = Problem::new(x, &train, y);
        let path = fit_path(&sub, lambdas, opts.tol, false, true);
        for (k, c) in cv.iter_mut().enumerate() {
            let model = &path.models[k.min(path.models.len() - 1)];
            *c += heldout_deviance(model, x, y, &test);
        }
    }
    cv.iter_mut().for_each(|c| *c /= n as f64);
    let best = cv
        .iter()
        .enumerate()
        .fold(0, |b, (k, v)| if *v < cv[b] { k } else { b });

    let (mut b0, mut beta) = full.coefs[best].clone();
    let mut trace = Vec::new();
    let kkt = prob.solve(lambdas[best], opts.tol, true, &mut b0, &mut beta, &mut trace);
    let info = LogisticFitInfo {
        lambda: lambdas[best],
        lambda_path: lambdas.to_vec(),
        cv_deviance: cv,
        kkt_residual: kkt,
        objective_trace: trace,
    };
    Ok((prob.to_model(b0, &beta), info))
}
