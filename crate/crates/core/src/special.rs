//! Log-densities and numerically stable helpers shared across modules.

use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// `ln P(X = k)` for `X ~ Poisson(lambda)`, with `Poisson(0; 0) = 1`.
pub fn ln_poisson_pmf(k: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k * lambda.ln() - lambda - ln_gamma(k + 1.0)
}

pub fn ln_chi2_pdf(x: f64, df: f64) -> f64 {
    let h = 0.5 * df;
    (h - 1.0) * x.ln() - 0.5 * x - h * std::f64::consts::LN_2 - ln_gamma(h)
}

/// Log density of the noncentral chi-squared distribution, summed as a
/// Poisson(nc/2) mixture of central chi-squares. The log-terms are concave in
/// the mixture index, so the sum starts at the largest term and walks outwards.
pub fn noncentral_chi2_ln_pdf(x: f64, df: f64, nc: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if nc == 0.0 {
        return ln_chi2_pdf(x, df);
    }
    let half_nc = 0.5 * nc;
    let ln_half_nc = half_nc.ln();
    let term = |k: f64| -> f64 {
        k * ln_half_nc - half_nc - ln_gamma(k + 1.0) + ln_chi2_pdf(x, df + 2.0 * k)
    };

    // Climb to the mode of the terms.
    let mut k = half_nc.floor();
    let mut t = term(k);
    loop {
        let up = term(k + 1.0);
        if up > t {
            k += 1.0;
            t = up;
            continue;
        }
        if k >= 1.0 {
            let down = term(k - 1.0);
            if down > t {
                k -= 1.0;
                t = down;
                continue;
            }
        }
        break;
    }

    let mode_term = t;
    let mut acc = 1.0;
    let cutoff = -40.0;
    let mut j = k + 1.0;
    loop {
        let d = term(j) - mode_term;
        acc += d.exp();
        if d < cutoff {
            break;
        }
        j += 1.0;
    }
    let mut j = k - 1.0;
    while j >= 0.0 {
        let d = term(j) - mode_term;
        acc += d.exp();
        if d < cutoff {
            break;
        }
        j -= 1.0;
    }
    mode_term + acc.ln()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" rule). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_limit_of_noncentral_density() {
        let x: f64 = 2.7;
        assert!((noncentral_chi2_ln_pdf(x, 3.0, 0.0) - ln_chi2_pdf(x, 3.0)).abs() < 1e-14);
        // tiny noncentrality approaches the central density
        let d = noncentral_chi2_ln_pdf(x, 3.0, 1e-10) - ln_chi2_pdf(x, 3.0);
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn noncentral_density_integrates_to_one() {
        // trapezoid on a fine grid, df = 4, nc = 30
        let (df, nc) = (4.0, 30.0);
        let h = 1e-3;
        let mut s = 0.0;
        let mut x = h;
        while x < 150.0 {
            s += noncentral_chi2_ln_pdf(x, df, nc).exp() * h;
            x += h;
        }
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn poisson_pmf_degenerate() {
        assert_eq!(ln_poisson_pmf(0.0, 0.0), 0.0);
        assert_eq!(ln_poisson_pmf(2.0, 0.0), f64::NEG_INFINITY);
        assert!((ln_poisson_pmf(3.0, 2.0) - (8.0f64 / 6.0 * (-2.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn stable_helpers() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((sigmoid(logit(0.3)) - 0.3).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }
}
