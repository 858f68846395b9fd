//! Invariant checks shared by the property suite and the acceptance runner.
#![allow(dead_code)]

use mhc::classifiers::{
    self, ClassifierKind, ClassifierSpec, FeatureMatrix, FeatureSpec, ForestOptions, Fitted,
    LogisticOptions, NetOptions,
};
use mhc::diagnostics::{ess, summarize};
use mhc::Error;
use mhc::likelihood::{estimate, mcwm_log_lik, MhcEstimator};
use mhc::models::{gillespie_step, ricker_population_path, Dataset, ModelSpec, ParamPoint};
use mhc::rng::{make_stream, sample, stream_id, DistSpec, RngStream};
use mhc::samplers::{
    debias, purpose, run_mhc, Chain, ChainConfig, MhcMode, Prior, Proposal, Target,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub type Check = fn() -> Result<(), String>;

pub const ALL: &[(&str, Check)] = &[
    ("rng_reproducible", rng_reproducible),
    ("noncentral_chi_squared_moments", noncentral_chi_squared_moments),
    ("inverse_gamma_mean", inverse_gamma_mean),
    ("simulate_is_pure", simulate_is_pure),
    ("gillespie_moves_one_population", gillespie_moves_one_population),
    ("gillespie_waits_are_exponential", gillespie_waits_are_exponential),
    ("ricker_positive_and_integral", ricker_positive_and_integral),
    ("cir_conditional_mean", cir_conditional_mean),
    ("gauss_choice_variance_ratio", gauss_choice_variance_ratio),
    ("fit_not_worse_than_constant", fit_not_worse_than_constant),
    ("logistic_descent_and_kkt", logistic_descent_and_kkt),
    ("logistic_matches_proximal_gradient", logistic_matches_proximal_gradient),
    ("net_training_descends", net_training_descends),
    ("fit_is_deterministic", fit_is_deterministic),
    ("eta_permutation_invariant", eta_permutation_invariant),
    ("fixed_estimate_repeatable", fixed_estimate_repeatable),
    ("mcwm_guard_rejects_unbounded_rate", mcwm_guard_rejects_unbounded_rate),
    ("debias_algebra", debias_algebra),
    ("chain_replay", chain_replay),
    ("fixed_mode_keeps_latent", fixed_mode_keeps_latent),
    ("summary_ignores_order", summary_ignores_order),
    ("ess_bounds", ess_bounds),
];

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the sample variance from the fourth central moment.
fn var_se(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).sqrt()
}

pub fn normal_data(n: usize, mu: f64, s2: f64, seed: u64) -> Dataset {
    let model = ModelSpec::NormalLs;
    let mut s = make_stream(seed, stream_id(purpose::DATA, 0, 0));
    let latent = model.draw_latent(n, &mut s).unwrap();
    model.simulate(&ParamPoint::new(vec![mu, s2]), &latent, n).unwrap()
}

pub fn nig() -> Prior {
    Prior::NormalInverseGamma {
        mu0: 0.0,
        nu: 1.0,
        alpha: 2.0,
        beta: 1.0,
    }
}

fn draws_of(s: &mut RngStream) -> Vec<u64> {
    let mut out: Vec<u64> = (0..8).map(|_| s.uniform().to_bits()).collect();
    out.extend((0..4).map(|_| s.normal().to_bits()));
    out.extend((0..2).map(|_| s.gamma(2.5, 1.0).to_bits()));
    out.push(s.poisson(7.0));
    out.push(s.noncentral_chi_squared(3.0, 2.0).to_bits());
    out
}

pub fn rng_reproducible() -> Result<(), String> {
    run(
        128,
        (any::<u64>(), 0u8..8, 0u32..(1 << 24), any::<u32>()),
        |(seed, p, owner, index)| {
            let id = stream_id(p, owner, index);
            let mut a = make_stream(seed, id);
            let mut b = make_stream(seed, id);
            prop_assert_eq!(draws_of(&mut a), draws_of(&mut b));
            let mut ca = a.split(3).unwrap();
            let mut cb = b.split(3).unwrap();
            for (x, y) in ca.iter_mut().zip(cb.iter_mut()) {
                prop_assert_eq!(draws_of(x), draws_of(y));
            }
            Ok(())
        },
    )
}

pub fn noncentral_chi_squared_moments() -> Result<(), String> {
    let (df, nc) = (3.0, 2.0);
    let mut s = make_stream(11, 0);
    let x = sample(&mut s, &DistSpec::NoncentralChiSquared { df, nc }, 100_000).unwrap();
    let (m, v) = (mean(&x), var(&x));
    let se_m = (v / x.len() as f64).sqrt();
    ensure((m - (df + nc)).abs() < 3.0 * se_m, || format!("mean {m} vs {}", df + nc))?;
    let want = 2.0 * (df + 2.0 * nc);
    ensure((v - want).abs() < 3.0 * var_se(&x), || format!("variance {v} vs {want}"))
}

pub fn inverse_gamma_mean() -> Result<(), String> {
    let (a, b) = (3.0, 2.0);
    let mut s = make_stream(12, 0);
    let x = sample(&mut s, &DistSpec::InverseGamma { shape: a, scale: b }, 100_000).unwrap();
    let m = mean(&x);
    let se = (var(&x) / x.len() as f64).sqrt();
    let want = b / (a - 1.0);
    ensure((m - want).abs() < 3.0 * se, || format!("mean {m} vs {want}"))
}

fn check_pure(model: &ModelSpec, theta: &ParamPoint, other: &ParamPoint, seed: u64) -> Result<(), TestCaseError> {
    let mut s = make_stream(seed, 0);
    let latent = model.draw_latent(4, &mut s).unwrap();
    let a = model.simulate(theta, &latent, 4).unwrap();
    let _ = model.simulate(other, &latent, 4);
    let b = model.simulate(theta, &latent, 4).unwrap();
    prop_assert_eq!(a, b);
    Ok(())
}

pub fn simulate_is_pure() -> Result<(), String> {
    run(
        48,
        (-2.0..2.0f64, 0.1..3.0f64, 0.03..0.1f64, 0.05..0.3f64, 0.03..0.1f64, any::<u64>()),
        |(mu, s2, a, b, sg, seed)| {
            check_pure(
                &ModelSpec::NormalLs,
                &ParamPoint::new(vec![mu, s2]),
                &ParamPoint::new(vec![0.0, 1.0]),
                seed,
            )?;
            check_pure(
                &ModelSpec::Cir {
                    t_len: 20,
                    delta: 1.0,
                    x0: 0.1,
                },
                &ParamPoint::new(vec![a, b, sg]),
                &ParamPoint::new(vec![0.07, 0.15, 0.07]),
                seed,
            )?;
            check_pure(
                &ModelSpec::Ricker { t_len: 20 },
                &ParamPoint::new(vec![3.0 + mu / 2.0, s2 / 3.0, 10.0 * s2]),
                &ParamPoint::new(vec![3.8, 1.0, 10.0]),
                seed,
            )?;
            check_pure(
                &ModelSpec::LotkaVolterra {
                    x0: 50,
                    y0: 100,
                    horizon: 2.0,
                    dt: 0.1,
                    cap: 1e5,
                },
                &ParamPoint::new(vec![a / 5.0, b * 2.0, 1.0, a / 5.0]),
                &ParamPoint::new(vec![0.01, 0.5, 1.0, 0.01]),
                seed,
            )
        },
    )
}

pub fn gillespie_moves_one_population() -> Result<(), String> {
    run(
        64,
        (0.0..0.1f64, 0.0..1.0f64, 0.0..2.0f64, 0.0..0.1f64, 1u64..200, 1u64..200, any::<u64>()),
        |(t1, t2, t3, t4, x0, y0, seed)| {
            let theta = [t1, t2, t3, t4];
            let mut s = make_stream(seed, 0);
            let (mut x, mut y) = (x0, y0);
            for _ in 0..300 {
                let Some((wait, r)) = gillespie_step(&theta, x, y, &mut s) else {
                    break;
                };
                prop_assert!(wait > 0.0 && wait.is_finite());
                let (px, py) = (x as i64, y as i64);
                r.apply(&mut x, &mut y);
                prop_assert_eq!((x as i64 - px).abs() + (y as i64 - py).abs(), 1);
            }
            Ok(())
        },
    )
}

/// Kolmogorov-Smirnov p-value against Exp(rate), asymptotic distribution.
pub fn ks_exponential_pvalue(x: &mut [f64], rate: f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = 1.0 - (-rate * v).exp();
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..200 {
        let j = j as f64;
        let sign = if j as u64 % 2 == 1 { 1.0 } else { -1.0 };
        p += 2.0 * sign * (-2.0 * j * j * lam * lam).exp();
    }
    p.clamp(0.0, 1.0)
}

pub fn gillespie_waits_are_exponential() -> Result<(), String> {
    // only prey birth is active, so the total rate is theta3 * y
    let theta = [0.0, 0.0, 0.8, 0.0];
    let mut s = make_stream(31, 0);
    let mut waits: Vec<f64> = (0..10_000)
        .map(|_| gillespie_step(&theta, 20, 40, &mut s).unwrap().0)
        .collect();
    let p = ks_exponential_pvalue(&mut waits, 0.8 * 40.0);
    ensure(p > 0.01, || format!("KS p-value {p}"))
}

pub fn ricker_positive_and_integral() -> Result<(), String> {
    run(
        64,
        (2.0..4.5f64, 0.05..1.0f64, 0.0..20.0f64, any::<u64>()),
        |(log_r, s2, phi, seed)| {
            let mut s = make_stream(seed, 0);
            let eps: Vec<f64> = (0..50).map(|_| s.normal()).collect();
            let mut path = Vec::new();
            ricker_population_path(&[log_r, s2], &eps, &mut path);
            prop_assert!(path.iter().all(|n| *n > 0.0), "{:?}", path);
            let model = ModelSpec::Ricker { t_len: 50 };
            let latent = model.draw_latent(3, &mut s).unwrap();
            let d = model
                .simulate(&ParamPoint::new(vec![log_r, s2, phi]), &latent, 3)
                .unwrap();
            prop_assert!(d.values().iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
            Ok(())
        },
    )
}

pub fn cir_conditional_mean() -> Result<(), String> {
    let (alpha, beta, sigma, x0) = (0.07, 0.15, 0.07, 0.05);
    let model = ModelSpec::Cir {
        t_len: 1,
        delta: 1.0,
        x0,
    };
    let m = 100_000;
    let mut s = make_stream(32, 0);
    let latent = model.draw_latent(m, &mut s).unwrap();
    let d = model
        .simulate(&ParamPoint::new(vec![alpha, beta, sigma]), &latent, m)
        .unwrap();
    let y = d.values();
    let got = mean(y);
    let se = (var(y) / m as f64).sqrt();
    let want = x0 * (-beta).exp() + alpha * (1.0 - (-beta).exp());
    ensure((got - want).abs() < 3.0 * se, || format!("mean {got} vs {want} (se {se})"))
}

pub fn gauss_choice_variance_ratio() -> Result<(), String> {
    let n = 500;
    let model = ModelSpec::GaussChoice { n };
    let m = 200_000;
    let mut s = make_stream(33, 0);
    let mut v = |k: f64| {
        let latent = model.draw_latent(m, &mut s).unwrap();
        var(model.simulate(&ParamPoint::new(vec![k, 0.2]), &latent, m).unwrap().values())
    };
    let ratio = v(2.0) / v(1.0);
    let want = 1.0 + 3.0 / (n as f64).sqrt();
    ensure((ratio / want - 1.0).abs() < 0.02, || format!("ratio {ratio} vs {want}"))
}

fn poly2_pair(n: usize, mu: f64, s2: f64, seed: u64) -> (FeatureMatrix, FeatureMatrix) {
    let real = normal_data(n, 0.0, 1.0, seed);
    let fake = normal_data(n, mu, s2, seed.wrapping_add(1));
    classifiers::pooled_features(&real, &fake, &FeatureSpec::Poly2).unwrap()
}

/// Empirical cross-entropy `sum log D(real) + sum log(1 - D(fake))`.
fn cross_entropy(d: &classifiers::Discriminator, real: &FeatureMatrix, fake: &FeatureMatrix) -> f64 {
    let ln_d = |l: f64| -softplus(-l);
    let mut total = 0.0;
    for r in real.iter_rows() {
        total += ln_d(d.log_odds(r).unwrap());
    }
    for r in fake.iter_rows() {
        total += ln_d(-d.log_odds(r).unwrap());
    }
    total
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn cv_logistic(folds: usize) -> ClassifierSpec {
    ClassifierSpec::new(ClassifierKind::LogisticL1Cv(LogisticOptions {
        folds,
        ..Default::default()
    }))
}

fn small_net() -> ClassifierSpec {
    ClassifierSpec::new(ClassifierKind::NeuralNet(NetOptions {
        hidden: 5,
        epochs: 200,
        ..Default::default()
    }))
}

fn small_forest() -> ClassifierSpec {
    ClassifierSpec::new(ClassifierKind::RandomForest(ForestOptions {
        n_trees: 30,
        ..Default::default()
    }))
}

pub fn fit_not_worse_than_constant() -> Result<(), String> {
    run(
        16,
        (-1.0..1.0f64, 0.5..2.0f64, any::<u64>()),
        |(mu, s2, seed)| {
            let (real, fake) = poly2_pair(60, mu, s2, seed);
            let (n, m) = (real.rows() as f64, fake.rows() as f64);
            let p = n / (n + m);
            let constant = n * p.ln() + m * (1.0 - p).ln();
            for spec in [ClassifierSpec::logistic_mle(), cv_logistic(5), small_forest(), small_net()] {
                let d = classifiers::fit(&spec, &real, &fake, &mut make_stream(seed, 9)).unwrap();
                let ce = cross_entropy(&d, &real, &fake);
                prop_assert!(ce >= constant - 1e-9, "{}: {} < {}", spec.name(), ce, constant);
            }
            Ok(())
        },
    )
}

fn gaussian_design(rows: usize, p: usize, signal: f64, seed: u64) -> (FeatureMatrix, FeatureMatrix) {
    let mut s = make_stream(seed, 0);
    let mut make = |shift: f64| {
        let rows: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                (0..p)
                    .map(|j| s.normal() * (1.0 + j as f64) + if j < 2 { shift } else { 0.0 })
                    .collect()
            })
            .collect();
        FeatureMatrix::from_rows(&rows).unwrap()
    };
    let real = make(signal);
    let fake = make(0.0);
    (real, fake)
}

pub fn logistic_descent_and_kkt() -> Result<(), String> {
    run(
        24,
        (0.0..1.5f64, 2usize..12, any::<u64>()),
        |(signal, p, seed)| {
            let (real, fake) = gaussian_design(30, p, signal, seed);
            let d = classifiers::fit(&cv_logistic(10), &real, &fake, &mut make_stream(seed, 1)).unwrap();
            let Fitted::Logistic { info, .. } = &d.fitted else {
                unreachable!()
            };
            for w in info.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{:?}", info.objective_trace);
            }
            prop_assert!(info.kkt_residual < 1e-6, "kkt {}", info.kkt_residual);
            Ok(())
        },
    )
}

/// Proximal gradient on the standardized penalized objective, mapped back
/// to the original feature scale.
pub fn proximal_logistic(x: &[Vec<f64>], y: &[f64], lambda: f64, iters: usize) -> (f64, Vec<f64>) {
    let n = x.len() as f64;
    let p = x[0].len();
    let center: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..p)
        .map(|j| (x.iter().map(|r| (r[j] - center[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| (0..p).map(|j| (r[j] - center[j]) / scale[j]).collect())
        .collect();
    let step = 1.0 / (0.25 * (1.0 + p as f64));
    let (mut b0, mut b) = (0.0, vec![0.0; p]);
    for _ in 0..iters {
        let mut g0 = 0.0;
        let mut g = vec![0.0; p];
        for (zi, yi) in z.iter().zip(y) {
            let eta = b0 + zi.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>();
            let r = 1.0 / (1.0 + (-eta).exp()) - yi;
            g0 += r / n;
            for j in 0..p {
                g[j] += r * zi[j] / n;
            }
        }
        b0 -= step * g0;
        for j in 0..p {
            let v = b[j] - step * g[j];
            b[j] = v.signum() * (v.abs() - step * lambda).max(0.0);
        }
    }
    let coef: Vec<f64> = (0..p).map(|j| b[j] / scale[j]).collect();
    let intercept = b0 - (0..p).map(|j| b[j] * center[j] / scale[j]).sum::<f64>();
    (intercept, coef)
}

pub fn logistic_matches_proximal_gradient() -> Result<(), String> {
    for seed in 0..5u64 {
        let (real, fake) = gaussian_design(10, 2, 0.8, 40 + seed);
        let lambda = 0.03;
        let spec = ClassifierSpec::new(ClassifierKind::LogisticL1Cv(LogisticOptions {
            lambda: Some(lambda),
            ..Default::default()
        }));
        let d = classifiers::fit(&spec, &real, &fake, &mut make_stream(seed, 2)).unwrap();
        let Fitted::Logistic { model, .. } = &d.fitted else {
            unreachable!()
        };
        let rows: Vec<Vec<f64>> = real.iter_rows().chain(fake.iter_rows()).map(|r| r.to_vec()).collect();
        let mut y = vec![1.0; 10];
        y.resize(20, 0.0);
        let (b0, b) = proximal_logistic(&rows, &y, lambda, 200_000);
        let worst = b
            .iter()
            .zip(&model.coef)
            .map(|(a, c)| (a - c).abs())
            .fold((b0 - model.intercept).abs(), f64::max);
        ensure(worst < 1e-4, || {
            format!("seed {seed}: fit ({}, {:?}) vs oracle ({b0}, {b:?})", model.intercept, model.coef)
        })?;
    }
    Ok(())
}

pub fn net_training_descends() -> Result<(), String> {
    run(12, (-1.0..1.0f64, 0.5..2.0f64, any::<u64>()), |(mu, s2, seed)| {
        let (real, fake) = poly2_pair(50, mu, s2, seed);
        let d = classifiers::fit(&small_net(), &real, &fake, &mut make_stream(seed, 3)).unwrap();
        let Fitted::Net(net) = &d.fitted else {
            unreachable!()
        };
        prop_assert!(net.final_loss <= net.initial_loss, "{} > {}", net.final_loss, net.initial_loss);
        Ok(())
    })
}

pub fn fit_is_deterministic() -> Result<(), String> {
    let (real, fake) = poly2_pair(40, 0.3, 1.4, 5);
    for spec in [cv_logistic(10), small_forest(), small_net()] {
        let a = classifiers::fit(&spec, &real, &fake, &mut make_stream(6, 7)).unwrap();
        let b = classifiers::fit(&spec, &real, &fake, &mut make_stream(6, 7)).unwrap();
        ensure(a.to_json().unwrap() == b.to_json().unwrap(), || {
            format!("{} differs between identical fits", spec.name())
        })?;
    }
    Ok(())
}

fn mle_estimator(m: usize, nrep: usize) -> MhcEstimator {
    MhcEstimator {
        classifier: ClassifierSpec::logistic_mle(),
        features: FeatureSpec::Poly2,
        m,
        nrep,
    }
}

pub fn eta_permutation_invariant() -> Result<(), String> {
    let model = ModelSpec::NormalLs;
    let real = normal_data(80, 0.0, 1.0, 50);
    let mut s = make_stream(51, 0);
    let latent = model.draw_latent(80, &mut s).unwrap();
    let est = mle_estimator(80, 1);
    let fit = make_stream(52, 0);
    run(
        24,
        (-0.4..0.4f64, 0.7..1.4f64, any::<u64>()),
        |(mu, s2, seed)| {
            let theta = ParamPoint::new(vec![mu, s2]);
            let a = estimate(&model, &theta, None, &real, &[latent.clone()], &est, &[fit.clone()]).unwrap();
            let mut order: Vec<usize> = (0..real.n()).collect();
            make_stream(seed, 0).shuffle(&mut order);
            let b = estimate(
                &model,
                &theta,
                None,
                &real.permuted(&order),
                &[latent.clone()],
                &est,
                &[fit.clone()],
            )
            .unwrap();
            prop_assert!((a.eta - b.eta).abs() < 1e-8 * a.eta.abs().max(1.0), "{} vs {}", a.eta, b.eta);
            Ok(())
        },
    )
}

pub fn fixed_estimate_repeatable() -> Result<(), String> {
    let model = ModelSpec::NormalLs;
    let real = normal_data(100, 0.0, 1.0, 53);
    let mut s = make_stream(54, 0);
    let latents: Vec<_> = (0..2).map(|_| model.draw_latent(100, &mut s).unwrap()).collect();
    let fits = make_stream(55, 0).split(2).unwrap();
    for spec in [ClassifierSpec::logistic_mle(), small_forest(), small_net()] {
        let est = MhcEstimator {
            classifier: spec,
            features: FeatureSpec::Poly2,
            m: 100,
            nrep: 2,
        };
        let theta = ParamPoint::new(vec![0.2, 0.9]);
        let a = estimate(&model, &theta, None, &real, &latents, &est, &fits).unwrap();
        let b = estimate(&model, &theta, None, &real, &latents, &est, &fits).unwrap();
        ensure(a.eta.to_bits() == b.eta.to_bits(), || {
            format!("{}: {} vs {}", est.classifier.name(), a.eta, b.eta)
        })?;
    }
    Ok(())
}

pub fn mcwm_guard_rejects_unbounded_rate() -> Result<(), String> {
    let model = ModelSpec::Cir {
        t_len: 5,
        delta: 1.0,
        x0: 0.1,
    };
    let data = Dataset::from_rows(&[vec![0.08, 0.07, 0.075, 0.06, 0.07]], model.column_names()).unwrap();
    let theta = ParamPoint::new(vec![0.07, f64::INFINITY, 0.07]);
    match mcwm_log_lik(&model, &data, &theta, 2, 4, &mut make_stream(56, 0)) {
        Err(Error::Domain(_)) => {}
        other => return Err(format!("infinite beta gave {other:?}")),
    }
    for beta in [1e150, 1e300] {
        let theta = ParamPoint::new(vec![0.07, beta, 0.07]);
        match mcwm_log_lik(&model, &data, &theta, 2, 4, &mut make_stream(56, 0)) {
            Err(Error::Domain(_)) => {}
            Ok(v) if !v.is_nan() => {}
            other => return Err(format!("beta {beta} gave {other:?}")),
        }
    }
    Ok(())
}

fn chain_from(values: Vec<Vec<f64>>) -> Chain {
    let n = values.len();
    let dim = values[0].len();
    Chain {
        algorithm: "test".into(),
        param_names: (0..dim).map(|j| format!("p{j}")).collect(),
        discrete: vec![false; dim],
        draws: values.into_iter().map(ParamPoint::new).collect(),
        log_lik_est: vec![0.0; n],
        log_prior: vec![0.0; n],
        accepted: vec![true; n],
        seed: 0,
        chain_index: 0,
        streams: Vec::new(),
        wall_clock_secs: 0.0,
    }
}

/// Largest violation of the recentering identities over both coordinates.
pub fn debias_violation(a: &[Vec<f64>], b: &[Vec<f64>], burn_in: usize) -> f64 {
    let out = debias(&chain_from(a.to_vec()), &chain_from(b.to_vec()), burn_in).unwrap();
    let kept = (a.len() - burn_in) as f64;
    let mut worst: f64 = 0.0;
    for j in 0..a[0].len() {
        let m_out = out.draws[burn_in..].iter().map(|d| d[j]).sum::<f64>() / kept;
        let m_b = b[burn_in..].iter().map(|d| d[j]).sum::<f64>() / kept;
        worst = worst.max((m_out - m_b).abs());
        let shift = out.draws[0][j] - a[0][j];
        for (o, x) in out.draws.iter().zip(a) {
            worst = worst.max(((o[j] - x[j]) - shift).abs());
        }
    }
    worst
}

pub fn debias_algebra() -> Result<(), String> {
    let row = prop::collection::vec(-100.0..100.0f64, 2);
    run(
        256,
        (2usize..60).prop_flat_map(move |len| {
            (
                prop::collection::vec(row.clone(), len),
                prop::collection::vec(row.clone(), len),
                0..len,
            )
        }),
        |(a, b, burn_in)| {
            let v = debias_violation(&a, &b, burn_in);
            prop_assert!(v < 1e-10, "violation {}", v);
            Ok(())
        },
    )
}

fn normal_target_parts(n: usize) -> (ModelSpec, Dataset, Prior, Proposal) {
    (
        ModelSpec::NormalLs,
        normal_data(n, 0.0, 1.0, 60),
        nig(),
        Proposal::GaussianRw {
            scales: vec![0.1, 0.1],
        },
    )
}

fn csv(chain: &Chain) -> Vec<u8> {
    let mut out = Vec::new();
    chain.write_csv(&mut out).unwrap();
    out
}

pub fn chain_replay() -> Result<(), String> {
    let (model, data, prior, proposal) = normal_target_parts(80);
    let target = Target {
        model: &model,
        prior: &prior,
        proposal: &proposal,
        real: &data,
        truth: None,
    };
    let est = mle_estimator(80, 2);
    for seed in [1u64, 2] {
        let cfg = ChainConfig {
            iterations: 25,
            init: ParamPoint::new(vec![0.0, 1.0]),
            seed,
            chain_index: 1,
        };
        for mode in [MhcMode::Fixed, MhcMode::Random, MhcMode::TwoSample] {
            let a = run_mhc(&target, mode, &est, &cfg).unwrap();
            let b = run_mhc(&target, mode, &est, &cfg).unwrap();
            ensure(csv(&a) == csv(&b), || format!("{mode:?} seed {seed} did not replay"))?;
        }
    }
    Ok(())
}

pub fn fixed_mode_keeps_latent() -> Result<(), String> {
    let (model, data, prior, proposal) = normal_target_parts(80);
    let target = Target {
        model: &model,
        prior: &prior,
        proposal: &proposal,
        real: &data,
        truth: None,
    };
    let est = mle_estimator(80, 2);
    let (seed, chain_index) = (7u64, 3u32);
    let cfg = ChainConfig {
        iterations: 40,
        init: ParamPoint::new(vec![0.0, 1.0]),
        seed,
        chain_index,
    };
    let chain = run_mhc(&target, MhcMode::Fixed, &est, &cfg).unwrap();
    ensure(chain.accepted.iter().any(|a| !a), || "no rejections to check".into())?;
    let mut ls = make_stream(seed, stream_id(purpose::LATENT, chain_index, 0));
    let latents: Vec<_> = (0..2).map(|_| model.draw_latent(80, &mut ls).unwrap()).collect();
    let fits = make_stream(seed, stream_id(purpose::FIT, chain_index, 0)).split(2).unwrap();
    for (t, theta) in chain.draws.iter().enumerate() {
        let e = estimate(&model, theta, None, &data, &latents, &est, &fits).unwrap();
        ensure(e.eta.to_bits() == chain.log_lik_est[t].to_bits(), || {
            format!("step {t}: chain {} vs step-0 sources {}", chain.log_lik_est[t], e.eta)
        })?;
    }
    Ok(())
}

pub fn summary_ignores_order() -> Result<(), String> {
    run(
        128,
        (prop::collection::vec(-50.0..50.0f64, 10..200), any::<u64>()),
        |(values, seed)| {
            let a = chain_from(values.iter().map(|v| vec![*v]).collect());
            let mut shuffled = values.clone();
            make_stream(seed, 0).shuffle(&mut shuffled);
            let b = chain_from(shuffled.iter().map(|v| vec![*v]).collect());
            let sa = summarize(&a, 0, 0.9).unwrap();
            let sb = summarize(&b, 0, 0.9).unwrap();
            let (ca, cb) = (&sa.coords[0], &sb.coords[0]);
            prop_assert_eq!(ca.lower.to_bits(), cb.lower.to_bits());
            prop_assert_eq!(ca.upper.to_bits(), cb.upper.to_bits());
            prop_assert!((ca.mean - cb.mean).abs() <= 1e-12 * (1.0 + ca.mean.abs()));
            Ok(())
        },
    )
}

fn ar1(phi: f64, t: usize, seed: u64) -> Vec<f64> {
    let mut s = make_stream(seed, 0);
    let mut x = 0.0;
    (0..t)
        .map(|_| {
            x = phi * x + s.normal();
            x
        })
        .collect()
}

pub fn ess_bounds() -> Result<(), String> {
    run(64, (-0.9..0.99f64, 10usize..400, any::<u64>()), |(phi, t, seed)| {
        let e = ess(&ar1(phi, t, seed));
        prop_assert!(e.value <= t as f64 && e.value > 0.0, "ess {} for T = {}", e.value, t);
        Ok(())
    })?;
    let t = 20_000;
    let iid = ess(&ar1(0.0, t, 70)).value;
    ensure((iid / t as f64 - 1.0).abs() < 0.1, || format!("iid ess {iid} for T = {t}"))?;
    let phi: f64 = 0.8;
    let want = t as f64 * (1.0 - phi) / (1.0 + phi);
    let got = ess(&ar1(phi, t, 71)).value;
    ensure((got / want - 1.0).abs() < 0.25, || format!("AR(1) ess {got} vs {want}"))
}

pub fn report(name: &str, result: &Result<(), String>) -> bool {
    match result {
        Ok(()) => {
            println!("PASS {name}");
            true
        }
        Err(e) => {
            println!("FAIL {name}: {e}");
            false
        }
    }
}
