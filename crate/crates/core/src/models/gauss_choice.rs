use super::ParamPoint;
use crate::special::ln_normal_pdf;

/// Standard deviation of candidate `model` for sample size `n`.
pub(crate) fn model_sd(n: usize, model: f64) -> f64 {
    if model == 1.0 {
        1.0
    } else {
        (1.0 + 3.0 / (n as f64).sqrt()).sqrt()
    }
}

pub(super) fn simulate(n: usize, theta: &ParamPoint, eps: &[f64]) -> Vec<f64> {
    let sd = model_sd(n, theta[0]);
    eps.iter().map(|e| theta[1] + sd * e).collect()
}

pub(super) fn ln_density(n: usize, theta: &ParamPoint, x: f64) -> f64 {
    ln_normal_pdf(x, theta[1], model_sd(n, theta[0]))
}
