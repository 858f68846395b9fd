use serde::{Deserialize, Serialize};

use super::prior::{ln_gamma_pdf, ln_inv_gamma_pdf};
use crate::error::{Error, Result};
use crate::models::ParamPoint;
use crate::rng::RngStream;
use crate::special::ln_normal_pdf;

/// A block of coordinates moved together by uniform windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBlock {
    pub prob: f64,
    pub coords: Vec<usize>,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordKernel {
    Normal,
    InverseGamma,
    Gamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    GaussianRw {
        scales: Vec<f64>,
    },
    /// Gaussian random walk on `log theta`, every coordinate.
    LogGaussianRw {
        sd: f64,
    },
    /// Picks one block with its probability and moves its coordinates
    /// uniformly within `+-half_width`.
    UniformWindowBlocked {
        blocks: Vec<WindowBlock>,
    },
    /// Independent per-coordinate kernels with mean equal to the current
    /// value and a common variance.
    PerCoordMixed {
        kernels: Vec<CoordKernel>,
        variance: f64,
    },
    /// Coordinate 0 is a label in {1, 2}: flip it with `flip_prob`,
    /// otherwise move coordinate 1 by a Gaussian step.
    DiscreteFlipPlusRw {
        #[serde(default = "half")]
        flip_prob: f64,
        sd: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl Proposal {
    /// Two-thirds joint `(alpha, beta)` moves, one third `sigma` moves.
    pub fn cir_windows(half_width: f64) -> Proposal {
        Proposal::UniformWindowBlocked {
            blocks: vec![
                WindowBlock {
                    prob: 2.0 / 3.0,
                    coords: vec![0, 1],
                    half_width,
                },
                WindowBlock {
                    prob: 1.0 / 3.0,
                    coords: vec![2],
                    half_width,
                },
            ],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("proposal: {msg}")));
        match self {
            Proposal::GaussianRw { scales } => {
                if scales.len() != dim || scales.iter().any(|s| !(*s > 0.0)) {
                    return bad(format!("need {dim} positive scales"));
                }
            }
            Proposal::LogGaussianRw { sd } if !(*sd > 0.0) => return bad("sd must be positive".into()),
            Proposal::UniformWindowBlocked { blocks } => {
                let total: f64 = blocks.iter().map(|b| b.prob).sum();
                if blocks.is_empty() || (total - 1.0).abs() > 1e-9 {
                    return bad("block probabilities must sum to 1".into());
                }
                for b in blocks {
                    if !(b.half_width > 0.0) || b.coords.iter().any(|c| *c >= dim) {
                        return bad("bad window block".into());
                    }
                }
            }
            Proposal::PerCoordMixed { kernels, variance } => {
                if kernels.len() != dim || !(*variance > 0.0) {
                    return bad(format!("need {dim} kernels and a positive variance"));
                }
            }
            Proposal::DiscreteFlipPlusRw { flip_prob, sd } => {
                if dim != 2 || !(0.0..=1.0).contains(flip_prob) || !(*sd > 0.0) {
                    return bad("flip proposal needs (label, mu) and sd > 0".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Draws a candidate and returns it with `log q(theta | new) - log q(new | theta)`.
    pub fn propose(&self, theta: &ParamPoint, stream: &mut RngStream) -> (ParamPoint, f64) {
        let mut new = theta.0.clone();
        let log_q_ratio = match self {
            Proposal::GaussianRw { scales } => {
                for (v, s) in new.iter_mut().zip(scales) {
                    *v += s * stream.normal();
                }
                0.0
            }
            Proposal::LogGaussianRw { sd } => {
                let mut ratio = 0.0;
                for v in new.iter_mut() {
                    let old = *v;
                    *v = old * (sd * stream.normal()).exp();
                    ratio += v.ln() - old.ln();
                }
                ratio
            }
            Proposal::UniformWindowBlocked { blocks } => {
                let u = stream.uniform();
                let mut acc = 0.0;
                let mut chosen = blocks.last().expect("validated");
                for b in blocks {
                    acc += b.prob;
                    if u < acc {
                        chosen = b;
                        break;
                    }
                }
                for &c in &chosen.coords {
                    new[c] += chosen.half_width * (2.0 * stream.uniform() - 1.0);
                }
                0.0
            }
            Proposal::PerCoordMixed { kernels, variance } => {
                for (v, k) in new.iter_mut().zip(kernels) {
                    *v = draw_kernel(*k, *v, *variance, stream);
                }
                let mut ratio = 0.0;
                for ((k, old), nv) in kernels.iter().zip(theta.iter()).zip(&new) {
                    ratio += ln_kernel(*k, *nv, *old, *variance) - ln_kernel(*k, *old, *nv, *variance);
                }
                ratio
            }
            Proposal::DiscreteFlipPlusRw { flip_prob, sd } => {
                if stream.uniform() < *flip_prob {
                    new[0] = 3.0 - new[0];
                } else {
                    new[1] += sd * stream.normal();
                }
                0.0
            }
        };
        (ParamPoint::new(new), log_q_ratio)
    }
}

fn draw_kernel(k: CoordKernel, mean: f64, var: f64, stream: &mut RngStream) -> f64 {
    match k {
        CoordKernel::Normal => mean + var.sqrt() * stream.normal(),
        CoordKernel::InverseGamma => {
            let shape = mean * mean / var + 2.0;
            mean * (shape - 1.0) / stream.gamma(shape, 1.0)
        }
        CoordKernel::Gamma => {
            let shape = mean * mean / var;
            stream.gamma(shape, mean / var)
        }
    }
}

/// `log q(to | from)` for one coordinate.
fn ln_kernel(k: CoordKernel, from: f64, to: f64, var: f64) -> f64 {
    match k {
        CoordKernel::Normal => ln_normal_pdf(to, from, var.sqrt()),
        CoordKernel::InverseGamma => {
            let shape = from * from / var + 2.0;
            ln_inv_gamma_pdf(to, shape, from * (shape - 1.0))
        }
        CoordKernel::Gamma => ln_gamma_pdf(to, from * from / var, from / var),
    }
}
