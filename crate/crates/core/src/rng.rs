//! Deterministic random-number streams.
//!
//! Every stream is a Philox4x32-10 counter-based generator. The 64-bit
//! `seed` is the Philox key and the 128-bit counter is laid out as
//! `[block_lo, block_hi, stream_lo, stream_hi]`, so a stream is the sequence
//! of cipher outputs for blocks `0, 1, 2, ...` at a fixed `stream_id`. Under
//! one key the cipher is a bijection of the counter, hence two streams that
//! share a seed but differ in `stream_id` can never produce the same block.
//!
//! Callers that need many streams (chains, replicates, per-step refreshes)
//! construct them with explicit ids via [`stream_id`]. [`RngStream::split`]
//! is the general-purpose alternative: it draws the children's ids from the
//! parent, which advances the parent past them. Split children are disjoint
//! from each other unless two 64-bit ids collide (probability about
//! `n^2 / 2^65`).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = (PHILOX_M0 as u64) * (ctr[0] as u64);
        let p1 = (PHILOX_M1 as u64) * (ctr[2] as u64);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Packs a purpose tag, an owner index and a sequence index into one stream id.
///
/// Layout: 8 bits purpose, 24 bits owner (chain or replicate), 32 bits index
/// (MCMC step or replicate). Distinct triples give distinct ids.
pub fn stream_id(purpose: u8, owner: u32, index: u32) -> u64 {
    ((purpose as u64) << 56) | (((owner & 0x00FF_FFFF) as u64) << 32) | index as u64
}

/// A single-owner random stream. Cloning copies the exact position.
#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    block: u64,
    buffer: [u64; 2],
    buffered: usize,
    spare_normal: Option<f64>,
}

pub fn make_stream(seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(seed, stream_id)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream {
            seed,
            stream_id,
            block: 0,
            buffer: [0; 2],
            buffered: 0,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 128-bit blocks consumed so far.
    pub fn position(&self) -> u64 {
        self.block
    }

    fn refill(&mut self) {
        let ctr = [
            self.block as u32,
            (self.block >> 32) as u32,
            self.stream_id as u32,
            (self.stream_id >> 32) as u32,
        ];
        let key = [self.seed as u32, (self.seed >> 32) as u32];
        let out = philox4x32_10(ctr, key);
        self.buffer = [
            (out[0] as u64) | ((out[1] as u64) << 32),
            (out[2] as u64) | ((out[3] as u64) << 32),
        ];
        self.buffered = 2;
        self.block = self.block.wrapping_add(1);
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.buffered == 0 {
            self.refill();
        }
        let v = self.buffer[2 - self.buffered];
        self.buffered -= 1;
        v
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; bias is below 2^-64 * n and irrelevant here.
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Standard normal via the Marsaglia polar method (pairs are cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform().ln() / rate
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1.
    pub fn gamma_unit(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let g = self.gamma_unit(shape + 1.0);
            return g * self.uniform().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        self.gamma_unit(shape) / rate
    }

    pub fn chi_squared(&mut self, df: f64) -> f64 {
        2.0 * self.gamma_unit(0.5 * df)
    }

    /// Noncentral chi-squared as a Poisson mixture of central chi-squares.
    pub fn noncentral_chi_squared(&mut self, df: f64, nc: f64) -> f64 {
        let k = self.poisson(0.5 * nc);
        self.chi_squared(df + 2.0 * k as f64)
    }

    /// Poisson by inversion for small means and PTRS above 10.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        if lambda <= 10.0 {
            let u = self.uniform();
            let mut k = 0u64;
            let mut p = (-lambda).exp();
            let mut cdf = p;
            while u > cdf && k < 1000 {
                k += 1;
                p *= lambda / k as f64;
                cdf += p;
            }
            return k;
        }
        self.poisson_ptrs(lambda)
    }

    // Hörmann's transformed rejection with squeeze.
    fn poisson_ptrs(&mut self, lambda: f64) -> u64 {
        let slam = lambda.sqrt();
        let loglam = lambda.ln();
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
                <= -lambda + k * loglam - ln_gamma(k + 1.0)
            {
                return k as u64;
            }
        }
    }

    /// Splits off `n` child streams; the parent advances past the ids it drew.
    pub fn split(&mut self, n: usize) -> Result<Vec<RngStream>> {
        if n == 0 {
            return Err(Error::EmptySplit);
        }
        Ok((0..n)
            .map(|_| RngStream::new(self.seed, self.next_u64()))
            .collect())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// A sampling distribution with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Uniform { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Exponential { rate: f64 },
    Poisson { lambda: f64 },
    NoncentralChiSquared { df: f64, nc: f64 },
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let bad = |msg: &str| Err(Error::ParameterDomain(format!("{self:?}: {msg}")));
        match *self {
            DistSpec::Uniform { a, b } => {
                if !finite(&[a, b]) || a >= b {
                    return bad("need finite a < b");
                }
            }
            DistSpec::Normal { mean, sd } => {
                if !finite(&[mean, sd]) || sd <= 0.0 {
                    return bad("need sd > 0");
                }
            }
            DistSpec::Gamma { shape, rate } => {
                if !finite(&[shape, rate]) || shape <= 0.0 || rate <= 0.0 {
                    return bad("need shape > 0 and rate > 0");
                }
            }
            DistSpec::InverseGamma { shape, scale } => {
                if !finite(&[shape, scale]) || shape <= 0.0 || scale <= 0.0 {
                    return bad("need shape > 0 and scale > 0");
                }
            }
            DistSpec::Exponential { rate } => {
                if !rate.is_finite() || rate <= 0.0 {
                    return bad("need rate > 0");
                }
            }
            DistSpec::Poisson { lambda } => {
                if !lambda.is_finite() || lambda < 0.0 {
                    return bad("need lambda >= 0");
                }
            }
            DistSpec::NoncentralChiSquared { df, nc } => {
                if !finite(&[df, nc]) || df <= 0.0 || nc < 0.0 {
                    return bad("need df > 0 and nc >= 0");
                }
            }
        }
        Ok(())
    }

    fn draw(&self, s: &mut RngStream) -> f64 {
        match *self {
            DistSpec::Uniform { a, b } => a + (b - a) * s.uniform(),
            DistSpec::Normal { mean, sd } => mean + sd * s.normal(),
            DistSpec::Gamma { shape, rate } => s.gamma(shape, rate),
            DistSpec::InverseGamma { shape, scale } => scale / s.gamma_unit(shape),
            DistSpec::Exponential { rate } => s.exponential(rate),
            DistSpec::Poisson { lambda } => s.poisson(lambda) as f64,
            DistSpec::NoncentralChiSquared { df, nc } => s.noncentral_chi_squared(df, nc),
        }
    }
}

/// Draws `count` i.i.d. values, advancing the stream.
pub fn sample(stream: &mut RngStream, spec: &DistSpec, count: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..count).map(|_| spec.draw(stream)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn same_identity_same_sequence() {
        let mut a = make_stream(42, 0);
        let mut b = make_stream(42, 0);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut z = make_stream(0, 0);
        let u = z.uniform();
        assert!(u > 0.0 && u < 1.0);
    }

    #[test]
    fn neighbouring_stream_ids_never_share_first_draw() {
        let mut seen = std::collections::HashSet::with_capacity(2_000_000);
        let mut collisions = 0usize;
        for seed in 0..1_000_000u64 {
            let a = make_stream(seed, 0).next_u64();
            let b = make_stream(seed, 1).next_u64();
            if a == b {
                collisions += 1;
            }
            if !seen.insert(a) {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn standard_normal_moments() {
        let mut s = make_stream(7, 3);
        let n = 100_000;
        let x = sample(&mut s, &DistSpec::Normal { mean: 0.0, sd: 1.0 }, n).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((0.98..=1.02).contains(&var), "var {var}");
    }

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn noncentral_chi_squared_moments() {
        let mut s = make_stream(11, 0);
        let n = 100_000;
        let x = sample(
            &mut s,
            &DistSpec::NoncentralChiSquared { df: 3.0, nc: 2.0 },
            n,
        )
        .unwrap();
        let (m, v) = mean_var(&x);
        assert!((m - 5.0).abs() < 0.05, "mean {m}");
        // mean within 3 SE, variance 2(df + 2nc) = 14 within 3 SE
        let se_mean = (14.0 / n as f64).sqrt();
        assert!((m - 5.0).abs() < 3.0 * se_mean);
        let fourth = x.iter().map(|xi| (xi - m).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((fourth - v * v) / n as f64).sqrt();
        assert!((v - 14.0).abs() < 3.0 * se_var, "var {v} se {se_var}");
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut s = make_stream(5, 9);
        let (a, b) = (5.0, 2.0);
        let n = 100_000;
        let x = sample(&mut s, &DistSpec::InverseGamma { shape: a, scale: b }, n).unwrap();
        let (m, v) = mean_var(&x);
        let se = (v / n as f64).sqrt();
        assert!((m - b / (a - 1.0)).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn poisson_small_and_large() {
        let mut s = make_stream(1, 1);
        assert_eq!(
            sample(&mut s, &DistSpec::Poisson { lambda: 0.0 }, 5).unwrap(),
            vec![0.0; 5]
        );
        for &lambda in &[3.5, 40.0, 2500.0] {
            let x = sample(&mut s, &DistSpec::Poisson { lambda }, 50_000).unwrap();
            let (m, v) = mean_var(&x);
            let se = (lambda / 50_000.0).sqrt();
            assert!((m - lambda).abs() < 4.0 * se, "lambda {lambda} mean {m}");
            assert!((v / lambda - 1.0).abs() < 0.05, "lambda {lambda} var {v}");
        }
    }

    #[test]
    fn gamma_small_shape() {
        let mut s = make_stream(2, 2);
        let x = sample(&mut s, &DistSpec::Gamma { shape: 0.3, rate: 2.0 }, 100_000).unwrap();
        let (m, v) = mean_var(&x);
        assert!((m - 0.15).abs() < 3.0 * (v / 1e5).sqrt());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = make_stream(0, 0);
        for spec in [
            DistSpec::Normal { mean: 0.0, sd: 0.0 },
            DistSpec::Gamma { shape: 1.0, rate: -1.0 },
            DistSpec::NoncentralChiSquared { df: 0.0, nc: 1.0 },
            DistSpec::NoncentralChiSquared { df: 1.0, nc: -1.0 },
            DistSpec::Poisson { lambda: -0.5 },
            DistSpec::Uniform { a: 1.0, b: 1.0 },
        ] {
            assert!(matches!(
                sample(&mut s, &spec, 1),
                Err(Error::ParameterDomain(_))
            ));
        }
    }

    #[test]
    fn split_is_reproducible_and_distinct() {
        let mut s1 = make_stream(9, 4);
        let mut s2 = make_stream(9, 4);
        let a = s1.split(3).unwrap();
        let b = s2.split(3).unwrap();
        assert_eq!(a, b);
        assert!(matches!(s1.split(0), Err(Error::EmptySplit)));

        let parent = make_stream(9, 4);
        let mut cont = parent.clone();
        let mut p = parent;
        let mut child = p.split(1).unwrap().remove(0);
        cont.next_u64(); // parent position after split(1)
        let c: Vec<u64> = (0..100).map(|_| child.next_u64()).collect();
        let d: Vec<u64> = (0..100).map(|_| cont.next_u64()).collect();
        assert!(c.iter().zip(&d).all(|(x, y)| x != y));
    }

    #[test]
    fn split_children_are_uncorrelated() {
        let mut s = make_stream(123, 0);
        let mut kids = s.split(2).unwrap();
        let n = 10_000;
        let a: Vec<f64> = (0..n).map(|_| kids[0].normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| kids[1].normal()).collect();
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((cov / (va * vb).sqrt()).abs() < 0.05);
    }

    #[test]
    fn stream_id_packing_is_injective() {
        assert_ne!(stream_id(1, 0, 5), stream_id(2, 0, 5));
        assert_ne!(stream_id(1, 1, 5), stream_id(1, 0, 5));
        assert_eq!(stream_id(3, 7, 9) & 0xFFFF_FFFF, 9);
    }
}
