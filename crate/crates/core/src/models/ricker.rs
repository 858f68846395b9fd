use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use super::ParamPoint;

/// Smallest `k` with `P(Poisson(lambda) <= k) >= u`.
///
/// Small means walk the CDF up from zero. Larger means start from a normal
/// approximation and correct with the exact CDF, so the result is the true
/// inverse transform at any mean.
pub fn poisson_inverse_cdf(u: f64, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 30.0 {
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while cdf < u && k < 10_000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        return k;
    }
    let z = Normal::standard().inverse_cdf(u);
    let mut k = (lambda + lambda.sqrt() * z).floor().max(0.0);
    let pmf = |k: f64| (k * lambda.ln() - lambda - ln_gamma(k + 1.0)).exp();
    // P(X <= k) = Q(k + 1, lambda)
    let mut cdf = gamma_ur(k + 1.0, lambda);
    let mut p = pmf(k);
    if cdf < u {
        while cdf < u {
            k += 1.0;
            p *= lambda / k;
            cdf += p;
            if p == 0.0 && cdf < u {
                break;
            }
        }
    } else {
        // step down while the previous CDF value still covers u
        while k > 0.0 && cdf - p >= u {
            cdf -= p;
            p *= k / lambda;
            k -= 1.0;
        }
    }
    k as u64
}

/// Latent layout per observation: `[U_1..U_T, eps_1..eps_T]`.
pub(super) fn simulate(t_len: usize, theta: &ParamPoint, latent: &[f64]) -> Vec<f64> {
    let (log_r, sigma, phi) = (theta[0], theta[1].sqrt(), theta[2]);
    let mut out = Vec::with_capacity(latent.len() / 2);
    for obs in latent.chunks(2 * t_len) {
        let (us, eps) = obs.split_at(t_len);
        let mut log_n = 0.0f64; // N_0 = 1
        for t in 0..t_len {
            let n = log_n.exp();
            log_n = log_r + log_n - n + sigma * eps[t];
            out.push(poisson_inverse_cdf(us[t], phi * log_n.exp()) as f64);
        }
    }
    out
}

/// The latent population path `N_1..N_T` for one observation.
pub fn population_path(theta: &[f64], eps: &[f64], out: &mut Vec<f64>) {
    let (log_r, sigma) = (theta[0], theta[1].sqrt());
    out.clear();
    let mut log_n = 0.0f64;
    for e in eps {
        let n = log_n.exp();
        log_n = log_r + log_n - n + sigma * e;
        out.push(log_n.exp());
    }
}
