//! Simulator-based generative models.
//!
//! Each model maps a parameter point and a latent source to a dataset through
//! a deterministic function: equal `(theta, latent, m)` always yields an
//! identical [`Dataset`]. Normal location-scale, model choice and Ricker
//! store their latent variables explicitly; Lotka-Volterra and CIR consume a
//! data-dependent number of variates and are driven by a recorded stream seed.

mod cir;
mod gauss_choice;
mod lotka_volterra;
mod normal;
mod ricker;

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub use cir::{cir_transition_ln_pdf, feller_condition};
pub use lotka_volterra::{gillespie_step, Reaction};
pub use ricker::{poisson_inverse_cdf, population_path as ricker_population_path};

/// An ordered parameter vector. Names and support come from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPoint(pub Vec<f64>);

impl ParamPoint {
    pub fn new(values: Vec<f64>) -> Self {
        ParamPoint(values)
    }
}

impl Deref for ParamPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamPoint {
    fn from(v: Vec<f64>) -> Self {
        ParamPoint(v)
    }
}

/// One coordinate's support: an interval, possibly open or unbounded, or a
/// finite set of integer labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Interval { lower: f64, upper: f64, open: bool },
    Labels(Vec<f64>),
}

impl Support {
    pub fn real_line() -> Self {
        Support::Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            open: true,
        }
    }

    pub fn positive() -> Self {
        Support::Interval {
            lower: 0.0,
            upper: f64::INFINITY,
            open: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Support::Interval { lower, upper, open } => {
                if x.is_nan() {
                    return false;
                }
                if *open {
                    x > *lower && x < *upper
                } else {
                    x >= *lower && x <= *upper
                }
            }
            Support::Labels(ls) => ls.contains(&x),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Support::Labels(_))
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Support::Interval { lower, upper, open } => {
                let (l, r) = if *open { ('(', ')') } else { ('[', ']') };
                write!(f, "{l}{lower}, {upper}{r}")
            }
            Support::Labels(ls) => write!(f, "{ls:?}"),
        }
    }
}

/// `n` observations, each a row of length `p`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    values: Vec<f64>,
    columns: Vec<String>,
}

impl Dataset {
    pub fn new(n: usize, p: usize, values: Vec<f64>, columns: Vec<String>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Contract("dataset needs n >= 1 and p >= 1".into()));
        }
        if values.len() != n * p || columns.len() != p {
            return Err(Error::Contract(format!(
                "dataset shape mismatch: {} values, {} columns for {n}x{p}",
                values.len(),
                columns.len()
            )));
        }
        Ok(Dataset {
            n,
            p,
            values,
            columns,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], columns: Vec<String>) -> Result<Self> {
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Contract("ragged dataset rows".into()));
        }
        Dataset::new(rows.len(), p, rows.concat(), columns)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.p)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// A dataset with the rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(self.values.len());
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            n: self.n,
            p: self.p,
            values,
            columns: self.columns.clone(),
        }
    }

    /// One CSV row per observation; the header names the layout.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Io("empty dataset file".into()))??;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Io(format!("bad number {c:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Dataset::from_rows(&rows, columns)
    }
}

/// The generator's randomness for `m` fake observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LatentSource {
    /// `m` latent vectors of length `per_obs`, row-major.
    Array {
        m: usize,
        per_obs: usize,
        values: Vec<f64>,
    },
    /// Regenerate from the stream `(seed, stream_id)`.
    Seed { m: usize, seed: u64, stream_id: u64 },
}

impl LatentSource {
    pub fn m(&self) -> usize {
        match self {
            LatentSource::Array { m, .. } | LatentSource::Seed { m, .. } => *m,
        }
    }
}

/// Which model family a spec belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    NormalLs,
    Ricker,
    LotkaVolterra,
    Cir,
    GaussChoice,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::NormalLs => "normal_ls",
            ModelId::Ricker => "ricker",
            ModelId::LotkaVolterra => "lotka_volterra",
            ModelId::Cir => "cir",
            ModelId::GaussChoice => "gauss_choice",
        }
    }
}

fn default_lv_x0() -> u64 {
    50
}
fn default_lv_y0() -> u64 {
    100
}
fn default_lv_horizon() -> f64 {
    20.0
}
fn default_lv_dt() -> f64 {
    0.1
}
fn default_lv_cap() -> f64 {
    1e7
}
fn default_cir_t() -> usize {
    500
}
fn default_cir_delta() -> f64 {
    1.0
}
fn default_cir_x0() -> f64 {
    0.1
}
fn default_ricker_t() -> usize {
    20
}
fn default_choice_n() -> usize {
    500
}

/// A model together with its structural constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `X ~ N(mu, sigma2)`, parameters `(mu, sigma2)`.
    NormalLs,
    /// Partially observed Ricker dynamics, parameters `(log_r, sigma2, phi)`.
    Ricker {
        #[serde(default = "default_ricker_t")]
        t_len: usize,
    },
    /// Stochastic predator-prey kinetics, parameters `(theta1..theta4)`.
    LotkaVolterra {
        #[serde(default = "default_lv_x0")]
        x0: u64,
        #[serde(default = "default_lv_y0")]
        y0: u64,
        #[serde(default = "default_lv_horizon")]
        horizon: f64,
        #[serde(default = "default_lv_dt")]
        dt: f64,
        #[serde(default = "default_lv_cap")]
        cap: f64,
    },
    /// Discretely observed CIR diffusion, parameters `(alpha, beta, sigma)`.
    Cir {
        #[serde(default = "default_cir_t")]
        t_len: usize,
        #[serde(default = "default_cir_delta")]
        delta: f64,
        #[serde(default = "default_cir_x0")]
        x0: f64,
    },
    /// Two Gaussian candidates, parameters `(model, mu)` with `model` in {1, 2}.
    GaussChoice {
        #[serde(default = "default_choice_n")]
        n: usize,
    },
}

impl ModelSpec {
    pub fn lotka_volterra_default() -> Self {
        ModelSpec::LotkaVolterra {
            x0: default_lv_x0(),
            y0: default_lv_y0(),
            horizon: default_lv_horizon(),
            dt: default_lv_dt(),
            cap: default_lv_cap(),
        }
    }

    pub fn cir_default() -> Self {
        ModelSpec::Cir {
            t_len: default_cir_t(),
            delta: default_cir_delta(),
            x0: default_cir_x0(),
        }
    }

    pub fn id(&self) -> ModelId {
        match self {
            ModelSpec::NormalLs => ModelId::NormalLs,
            ModelSpec::Ricker { .. } => ModelId::Ricker,
            ModelSpec::LotkaVolterra { .. } => ModelId::LotkaVolterra,
            ModelSpec::Cir { .. } => ModelId::Cir,
            ModelSpec::GaussChoice { .. } => ModelId::GaussChoice,
        }
    }

    pub fn dim(&self) -> usize {
        self.param_names().len()
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            ModelSpec::NormalLs => vec!["mu", "sigma2"],
            ModelSpec::Ricker { .. } => vec!["log_r", "sigma2", "phi"],
            ModelSpec::LotkaVolterra { .. } => vec!["theta1", "theta2", "theta3", "theta4"],
            ModelSpec::Cir { .. } => vec!["alpha", "beta", "sigma"],
            ModelSpec::GaussChoice { .. } => vec!["model", "mu"],
        }
    }

    pub fn support(&self) -> Vec<Support> {
        match self {
            ModelSpec::NormalLs => vec![Support::real_line(), Support::positive()],
            ModelSpec::Ricker { .. } => vec![
                Support::real_line(),
                Support::positive(),
                Support::Interval {
                    lower: 0.0,
                    upper: f64::INFINITY,
                    open: false,
                },
            ],
            ModelSpec::LotkaVolterra { .. } => vec![
                Support::Interval {
                    lower: 0.0,
                    upper: f64::INFINITY,
                    open: false,
                };
                4
            ],
            ModelSpec::Cir { .. } => vec![Support::positive(); 3],
            ModelSpec::GaussChoice { .. } => {
                vec![Support::Labels(vec![1.0, 2.0]), Support::real_line()]
            }
        }
    }

    pub fn discrete_coordinates(&self) -> Vec<bool> {
        self.support().iter().map(Support::is_discrete).collect()
    }

    pub fn check_theta(&self, theta: &ParamPoint) -> Result<()> {
        let support = self.support();
        let names = self.param_names();
        if theta.len() != support.len() {
            return Err(Error::Support {
                name: "dimension".into(),
                value: theta.len() as f64,
                support: format!("{}", support.len()),
            });
        }
        for ((&v, s), name) in theta.iter().zip(&support).zip(names) {
            if !s.contains(v) {
                return Err(Error::Support {
                    name: name.to_string(),
                    value: v,
                    support: s.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Length of one observation row.
    pub fn row_len(&self) -> usize {
        match self {
            ModelSpec::NormalLs | ModelSpec::GaussChoice { .. } => 1,
            ModelSpec::Ricker { t_len } => *t_len,
            ModelSpec::LotkaVolterra { .. } => 2 * self.lv_points(),
            ModelSpec::Cir { t_len, .. } => *t_len,
        }
    }

    fn lv_points(&self) -> usize {
        match self {
            ModelSpec::LotkaVolterra { horizon, dt, .. } => (horizon / dt).round() as usize + 1,
            _ => 0,
        }
    }

    /// Number of series interleaved in one row.
    pub fn n_series(&self) -> usize {
        match self {
            ModelSpec::LotkaVolterra { .. } => 2,
            _ => 1,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        match self {
            ModelSpec::NormalLs | ModelSpec::GaussChoice { .. } => vec!["X".into()],
            ModelSpec::Ricker { t_len } | ModelSpec::Cir { t_len, .. } => {
                (1..=*t_len).map(|t| format!("X_{t}")).collect()
            }
            ModelSpec::LotkaVolterra { .. } => {
                let t = self.lv_points();
                (1..=t)
                    .map(|i| format!("X_{i}"))
                    .chain((1..=t).map(|i| format!("Y_{i}")))
                    .collect()
            }
        }
    }

    /// Latent values per observation in array mode; `None` for seed mode.
    pub fn latent_per_obs(&self) -> Option<usize> {
        match self {
            ModelSpec::NormalLs | ModelSpec::GaussChoice { .. } => Some(1),
            ModelSpec::Ricker { t_len } => Some(2 * t_len),
            ModelSpec::LotkaVolterra { .. } | ModelSpec::Cir { .. } => None,
        }
    }

    pub fn has_oracle(&self) -> bool {
        matches!(
            self,
            ModelSpec::NormalLs | ModelSpec::Cir { .. } | ModelSpec::GaussChoice { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match *self {
            ModelSpec::Ricker { t_len } if t_len == 0 => bad("ricker t_len must be positive"),
            ModelSpec::LotkaVolterra {
                horizon, dt, cap, ..
            } if !(horizon > 0.0 && dt > 0.0 && cap > 0.0) => {
                bad("lotka_volterra horizon, dt and cap must be positive")
            }
            ModelSpec::Cir { t_len, delta, x0 } if t_len == 0 || !(delta > 0.0 && x0 > 0.0) => {
                bad("cir t_len, delta and x0 must be positive")
            }
            ModelSpec::GaussChoice { n } if n == 0 => bad("gauss_choice n must be positive"),
            _ => Ok(()),
        }
    }

    /// Draws the latent source for `m` fake observations.
    pub fn draw_latent(&self, m: usize, stream: &mut RngStream) -> Result<LatentSource> {
        if m == 0 {
            return Err(Error::Contract("m must be at least 1".into()));
        }
        Ok(match self {
            ModelSpec::NormalLs | ModelSpec::GaussChoice { .. } => LatentSource::Array {
                m,
                per_obs: 1,
                values: (0..m).map(|_| stream.normal()).collect(),
            },
            ModelSpec::Ricker { t_len } => {
                let t = *t_len;
                let mut values = Vec::with_capacity(m * 2 * t);
                for _ in 0..m {
                    values.extend((0..t).map(|_| stream.uniform()));
                    values.extend((0..t).map(|_| stream.normal()));
                }
                LatentSource::Array {
                    m,
                    per_obs: 2 * t,
                    values,
                }
            }
            ModelSpec::LotkaVolterra { .. } | ModelSpec::Cir { .. } => {
                let child = stream.split(1)?.remove(0);
                LatentSource::Seed {
                    m,
                    seed: child.seed(),
                    stream_id: child.stream_id(),
                }
            }
        })
    }

    fn latent_array<'a>(&self, latent: &'a LatentSource, m: usize) -> Result<&'a [f64]> {
        let want = self.latent_per_obs().expect("array-mode model");
        match latent {
            LatentSource::Array {
                per_obs, values, ..
            } => {
                if *per_obs != want || values.len() != m * want {
                    return Err(Error::Latent(format!(
                        "expected {m} x {want} latent values, got {} with per_obs {per_obs}",
                        values.len()
                    )));
                }
                Ok(values)
            }
            LatentSource::Seed { .. } => Err(Error::Latent(format!(
                "{} needs an explicit latent array",
                self.id().as_str()
            ))),
        }
    }

    fn latent_stream(&self, latent: &LatentSource) -> Result<RngStream> {
        match latent {
            LatentSource::Seed {
                seed, stream_id, ..
            } => Ok(RngStream::new(*seed, *stream_id)),
            LatentSource::Array { .. } => Err(Error::Latent(format!(
                "{} is driven by a stream seed",
                self.id().as_str()
            ))),
        }
    }

    /// Generates `m` observations as a pure function of `(theta, latent)`.
    pub fn simulate(&self, theta: &ParamPoint, latent: &LatentSource, m: usize) -> Result<Dataset> {
        self.check_theta(theta)?;
        if m == 0 {
            return Err(Error::Contract("m must be at least 1".into()));
        }
        let values = match self {
            ModelSpec::NormalLs => normal::simulate(theta, self.latent_array(latent, m)?),
            ModelSpec::GaussChoice { n } => {
                gauss_choice::simulate(*n, theta, self.latent_array(latent, m)?)
            }
            ModelSpec::Ricker { t_len } => {
                ricker::simulate(*t_len, theta, self.latent_array(latent, m)?)
            }
            ModelSpec::LotkaVolterra {
                x0,
                y0,
                horizon,
                dt,
                cap,
            } => {
                let mut s = self.latent_stream(latent)?;
                let cfg = lotka_volterra::LvConfig {
                    x0: *x0,
                    y0: *y0,
                    points: self.lv_points(),
                    dt: *dt,
                    horizon: *horizon,
                    cap: *cap,
                };
                let mut out = Vec::with_capacity(m * self.row_len());
                for _ in 0..m {
                    out.extend(lotka_volterra::simulate_one(&cfg, theta, &mut s)?);
                }
                out
            }
            ModelSpec::Cir { t_len, delta, x0 } => {
                let mut s = self.latent_stream(latent)?;
                cir::simulate(*t_len, *delta, *x0, theta, m, &mut s)
            }
        };
        Dataset::new(m, self.row_len(), values, self.column_names())
    }

    /// Exact log density of one observation row.
    pub fn row_log_density(&self, theta: &ParamPoint, row: &[f64]) -> Result<f64> {
        match self {
            ModelSpec::NormalLs => Ok(normal::ln_density(theta, row[0])),
            ModelSpec::GaussChoice { n } => Ok(gauss_choice::ln_density(*n, theta, row[0])),
            ModelSpec::Cir { delta, x0, .. } => cir::series_ln_density(*delta, *x0, theta, row),
            ModelSpec::Ricker { .. } | ModelSpec::LotkaVolterra { .. } => {
                Err(Error::Unavailable(format!(
                    "exact likelihood of {}",
                    self.id().as_str()
                )))
            }
        }
    }

    /// Exact `log p_theta(data)` where the model has one.
    pub fn oracle_log_lik(&self, theta: &ParamPoint, data: &Dataset) -> Result<f64> {
        if !self.has_oracle() {
            return Err(Error::Unavailable(format!(
                "exact likelihood of {}",
                self.id().as_str()
            )));
        }
        self.check_theta(theta)?;
        if data.p() != self.row_len() {
            return Err(Error::Contract(format!(
                "data rows have length {}, model expects {}",
                data.p(),
                self.row_len()
            )));
        }
        let mut total = 0.0;
        for row in data.rows() {
            total += self.row_log_density(theta, row)?;
        }
        Ok(total)
    }
}
