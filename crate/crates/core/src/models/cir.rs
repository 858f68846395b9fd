use super::ParamPoint;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::noncentral_chi2_ln_pdf;

/// `2 alpha beta >= sigma^2`: the process stays strictly positive.
pub fn feller_condition(theta: &[f64]) -> bool {
    2.0 * theta[0] * theta[1] >= theta[2] * theta[2]
}

struct Transition {
    scale: f64,
    df: f64,
    decay: f64,
}

impl Transition {
    fn new(theta: &[f64], delta: f64) -> Self {
        let (alpha, beta, sigma) = (theta[0], theta[1], theta[2]);
        let decay = (-beta * delta).exp();
        let s2 = sigma * sigma;
        Transition {
            scale: s2 * (1.0 - decay) / (4.0 * beta),
            df: 4.0 * alpha * beta / s2,
            decay,
        }
    }

    fn nc(&self, x: f64) -> f64 {
        x * self.decay / self.scale
    }
}

pub(super) fn simulate(
    t_len: usize,
    delta: f64,
    x0: f64,
    theta: &ParamPoint,
    m: usize,
    stream: &mut RngStream,
) -> Vec<f64> {
    if !feller_condition(theta) {
        log::warn!("CIR parameters {:?} violate the Feller condition", &theta[..]);
    }
    let tr = Transition::new(theta, delta);
    let mut out = Vec::with_capacity(m * t_len);
    for _ in 0..m {
        let mut x = x0;
        for _ in 0..t_len {
            x = tr.scale * stream.noncentral_chi_squared(tr.df, tr.nc(x));
            out.push(x);
        }
    }
    out
}

/// Exact log transition density `log p(y | x)` over one step of length `delta`.
pub fn cir_transition_ln_pdf(theta: &[f64], delta: f64, x: f64, y: f64) -> f64 {
    let tr = Transition::new(theta, delta);
    noncentral_chi2_ln_pdf(y / tr.scale, tr.df, tr.nc(x)) - tr.scale.ln()
}

pub(super) fn series_ln_density(
    delta: f64,
    x0: f64,
    theta: &ParamPoint,
    row: &[f64],
) -> Result<f64> {
    if let Some(bad) = row.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("CIR observation {bad} is not positive")));
    }
    let tr = Transition::new(theta, delta);
    let ln_scale = tr.scale.ln();
    let mut prev = x0;
    let mut total = 0.0;
    for &y in row {
        total += noncentral_chi2_ln_pdf(y / tr.scale, tr.df, tr.nc(prev)) - ln_scale;
        prev = y;
    }
    Ok(total)
}
