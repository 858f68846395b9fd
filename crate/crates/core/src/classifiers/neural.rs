//! Single-hidden-layer tanh network trained by full-batch gradient descent
//! with momentum on mean cross-entropy.

use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::{sigmoid, softplus};

fn default_hidden() -> usize {
    50
}
fn default_epochs() -> usize {
    500
}
fn default_lr() -> f64 {
    0.01
}
fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetOptions {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            hidden: default_hidden(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            momentum: default_momentum(),
        }
    }
}

impl NetOptions {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum)
        {
            return Err(Error::Config("bad network settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Hidden weights, `hidden x p` row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

impl Net {
    fn p(&self) -> usize {
        self.center.len()
    }

    fn standardize(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..self.p() {
            out[j] = (row[j] - self.center[j]) / self.scale[j];
        }
    }

    pub fn log_odds(&self, row: &[f64]) -> f64 {
        let mut z = vec![0.0; self.p()];
        self.standardize(row, &mut z);
        let params = Params {
            w1: &self.w1,
            b1: &self.b1,
            w2: &self.w2,
            b2: self.b2,
        };
        params.forward(&z, &mut vec![0.0; self.b1.len()])
    }
}

struct Params<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: f64,
}

impl Params<'_> {
    fn forward(&self, z: &[f64], h: &mut [f64]) -> f64 {
        let p = z.len();
        let mut out = self.b2;
        for k in 0..self.b1.len() {
            let a = self.b1[k]
                + self.w1[k * p..(k + 1) * p]
                    .iter()
                    .zip(z)
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
            h[k] = a.tanh();
            out += self.w2[k] * h[k];
        }
        out
    }
}

/// Flat parameter vector layout: `[w1, b1, w2, b2]`.
fn loss_and_grad(theta: &[f64], z: &FeatureMatrix, y: &[f64], hidden: usize, grad: &mut [f64]) -> f64 {
    let p = z.cols();
    let (w1, rest) = theta.split_at(hidden * p);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    let params = Params {
        w1,
        b1,
        w2,
        b2: b2[0],
    };
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (gw1, grest) = grad.split_at_mut(hidden * p);
    let (gb1, grest) = grest.split_at_mut(hidden);
    let (gw2, gb2) = grest.split_at_mut(hidden);
    let mut h = vec![0.0; hidden];
    let n = z.rows() as f64;
    let mut loss = 0.0;
    for (i, row) in z.iter_rows().enumerate() {
        let o = params.forward(row, &mut h);
        loss += softplus(o) - y[i] * o;
        let d = (sigmoid(o) - y[i]) / n;
        gb2[0] += d;
        for k in 0..hidden {
            gw2[k] += d * h[k];
            let dh = d * w2[k] * (1.0 - h[k] * h[k]);
            gb1[k] += dh;
            for (g, x) in gw1[k * p..(k + 1) * p].iter_mut().zip(row) {
                *g += dh * x;
            }
        }
    }
    loss / n
}

/// Returns the iterate with the lowest training loss seen, so the reported
/// final loss never exceeds the initial one.
pub fn fit_net(x: &FeatureMatrix, y: &[f64], opts: &NetOptions, stream: &mut RngStream) -> Result<Net> {
    opts.validate()?;
    let (n, p) = (x.rows(), x.cols());
    let mut center = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let m = x.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64;
        let v = x.iter_rows().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n as f64;
        center[j] = m;
        scale[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let mut zdata = Vec::with_capacity(n * p);
    for r in x.iter_rows() {
        for j in 0..p {
            zdata.push((r[j] - center[j]) / scale[j]);
        }
    }
    let z = FeatureMatrix::new(n, p, zdata)?;

    let hdim = opts.hidden;
    let len = hdim * p + 2 * hdim + 1;
    let mut theta = vec![0.0; len];
    let sd1 = 1.0 / (p.max(1) as f64).sqrt();
    for w in theta[..hdim * p].iter_mut() {
        *w = sd1 * stream.normal();
    }
    let sd2 = 1.0 / (hdim as f64).sqrt();
    for w in theta[hdim * p + hdim..hdim * p + 2 * hdim].iter_mut() {
        *w = sd2 * stream.normal();
    }
    let mut grad = vec![0.0; len];
    let mut velocity = vec![0.0; len];
    let initial_loss = loss_and_grad(&theta, &z, y, hdim, &mut grad);
    let mut best = (initial_loss, theta.clone());
    for _ in 0..opts.epochs {
        for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = opts.momentum * *v - opts.learning_rate * g;
            *t += *v;
        }
        let loss = loss_and_grad(&theta, &z, y, hdim, &mut grad);
        if loss < best.0 {
            best = (loss, theta.clone());
        }
    }
    let (final_loss, theta) = best;
    let (w1, rest) = theta.split_at(hdim * p);
    let (b1, rest) = rest.split_at(hdim);
    let (w2, b2) = rest.split_at(hdim);
    Ok(Net {
        center,
        scale,
        w1: w1.to_vec(),
        b1: b1.to_vec(),
        w2: w2.to_vec(),
        b2: b2[0],
        initial_loss,
        final_loss,
    })
}
