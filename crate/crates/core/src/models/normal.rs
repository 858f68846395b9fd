use super::ParamPoint;
use crate::special::ln_normal_pdf;

/// `X_i = mu + sigma * eps_i`.
pub(super) fn simulate(theta: &ParamPoint, eps: &[f64]) -> Vec<f64> {
    let (mu, sd) = (theta[0], theta[1].sqrt());
    eps.iter().map(|e| mu + sd * e).collect()
}

pub(super) fn ln_density(theta: &ParamPoint, x: f64) -> f64 {
    ln_normal_pdf(x, theta[0], theta[1].sqrt())
}
